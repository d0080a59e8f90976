// SPDX-License-Identifier: Apache-2.0
//
// Binary linear program over the assignment array y[x1, n2, c]: one action
// (stage-two size, critical value) is chosen per stage-one outcome x1.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "twostage/design.hpp"
#include "twostage/prob_kernel.hpp"

namespace twostage {

struct Action {
  int n2 = 0;
  CriticalValue c;
  int size = 0;  // n1 + n2
  double ce = 0.0;
  double cp = 0.0;

  bool is_stop() const { return n2 == 0; }
};

struct CandidateGroup {
  int x1 = 0;
  double weight0 = 0.0;
  double weight1 = 0.0;
  std::vector<Action> actions;  // canonical order: n2, then c
};

struct CandidateTable {
  int n1 = 0;
  int n_max = 0;
  TrialParams params;
  std::vector<CandidateGroup> groups;

  std::size_t action_count() const {
    std::size_t total = 0;
    for (const auto& g : groups) total += g.actions.size();
    return total;
  }
};

/// Every admissible (n2, c) per stage-one outcome, with coefficients.
inline CandidateTable enumerate_candidates(int n1, int n_max, const TrialParams& params) {
  params.validate();
  if (n1 < 1) throw std::domain_error("enumerate_candidates: n1 must be positive");
  if (n1 > n_max) throw std::domain_error("enumerate_candidates: n1 exceeds n_max");

  CandidateTable table;
  table.n1 = n1;
  table.n_max = n_max;
  table.params = params;

  const auto w0 = stage_one_weights(n1, params.rho0);
  const auto w1 = stage_one_weights(n1, params.rho1);
  const int max_n2 = n_max - n1;
  std::vector<std::vector<double>> tail0(max_n2 + 1), tail1(max_n2 + 1);
  for (int n2 = 1; n2 <= max_n2; ++n2) {
    tail0[n2] = upper_tail_table({n2, params.rho0});
    tail1[n2] = upper_tail_table({n2, params.rho1});
  }

  table.groups.resize(static_cast<std::size_t>(n1) + 1);
  for (int x1 = 0; x1 <= n1; ++x1) {
    auto& g = table.groups[x1];
    g.x1 = x1;
    g.weight0 = w0[x1];
    g.weight1 = w1[x1];
    g.actions.push_back({0, CriticalValue::neg_inf(), n1, 1.0, 1.0});
    g.actions.push_back({0, CriticalValue::pos_inf(), n1, 0.0, 0.0});
    for (int n2 = 1; n2 <= max_n2; ++n2) {
      const int c_hi = std::min(n1 + n2, n_max) - 1;
      for (int c = x1; c <= c_hi; ++c) {
        // P[X2 > c - x1] is zero once c - x1 >= n2
        const auto t = static_cast<std::size_t>(std::min(c - x1, n2) + 1);
        g.actions.push_back({n2, CriticalValue::finite(c), n1 + n2, tail0[n2][t], tail1[n2][t]});
      }
    }
  }
  return table;
}

struct ConstraintFlags {
  bool monotone_ce = false;
  bool contiguous_stopping = false;
  bool unimodal_n = false;
  std::optional<double> min_conditional_power;

  static ConstraintFlags optimal() { return {}; }
  static ConstraintFlags ek() { return {true, false, false, std::nullopt}; }
  static ConstraintFlags nice() { return {false, true, true, std::nullopt}; }

  bool operator==(const ConstraintFlags&) const = default;
};

struct ObjectiveSpec {
  enum class Kind { ExpectedN, ExpectedNGamma, ExpectedExpN, PriorWeighted };
  Kind kind = Kind::ExpectedN;
  double gamma = 2.0;
  DiscretePrior prior;

  static ObjectiveSpec expected_n() { return {}; }
  static ObjectiveSpec expected_n_gamma(double g) { return {Kind::ExpectedNGamma, g, {}}; }
  static ObjectiveSpec expected_exp_n() { return {Kind::ExpectedExpN, 2.0, {}}; }
  static ObjectiveSpec prior_weighted(DiscretePrior p) { return {Kind::PriorWeighted, 2.0, std::move(p)}; }

  void validate() const {
    if (kind == Kind::ExpectedNGamma && !(gamma > 1.0))
      throw std::invalid_argument("objective: gamma must exceed 1");
    if (kind == Kind::PriorWeighted) prior.validate();
  }
};

enum class Sense { Le, Eq, Ge };

enum class RowKind {
  Functionhood,
  Power,
  Alpha,
  MonotoneCe,
  FutilityLink,
  FutilityChain,
  EfficacyLink,
  EfficacyChain,
  UnimodalUp,
  UnimodalDown,
  PeakCover,
};

enum class VarKind { Assignment, Futility, Efficacy, Peak };

struct VarMeta {
  VarKind kind = VarKind::Assignment;
  int x1 = 0;
  // assignment variables only
  int n2 = 0;
  CriticalValue c;
  int size = 0;
  double ce = 0.0;
  double cp = 0.0;

  static VarMeta aux(VarKind k, int x1) {
    VarMeta m;
    m.kind = k;
    m.x1 = x1;
    return m;
  }

  bool is_stop_action() const { return kind == VarKind::Assignment && n2 == 0; }

  std::string name() const {
    switch (kind) {
      case VarKind::Futility: return "fut[" + std::to_string(x1) + "]";
      case VarKind::Efficacy: return "eff[" + std::to_string(x1) + "]";
      case VarKind::Peak: return "peak[" + std::to_string(x1) + "]";
      default:
        return "y[" + std::to_string(x1) + "," + std::to_string(n2) + "," + c.to_string() + "]";
    }
  }
};

struct Row {
  RowKind kind = RowKind::Functionhood;
  std::string tag;
  Sense sense = Sense::Eq;
  double rhs = 0.0;
  std::vector<int> index;
  std::vector<double> coef;
  // Big-M row: holds for every assignment once this variable is 0, binding when it is 1.
  int indicator = -1;

  double activity(const std::vector<std::uint8_t>& x) const {
    double a = 0.0;
    for (std::size_t k = 0; k < index.size(); ++k)
      if (x[index[k]]) a += coef[k];
    return a;
  }

  double violation(double act) const {
    switch (sense) {
      case Sense::Le: return std::max(0.0, act - rhs);
      case Sense::Ge: return std::max(0.0, rhs - act);
      default: return std::abs(act - rhs);
    }
  }
};

struct BinaryLinearProgram {
  int n1 = 0;
  int n_max = 0;
  std::vector<VarMeta> vars;
  std::vector<double> objective;
  std::vector<Row> rows;
  // groups[x1] lists the assignment variables of stage-one outcome x1 in canonical order
  std::vector<std::vector<int>> groups;

  std::size_t num_vars() const { return vars.size(); }

  int add_var(VarMeta meta, double cost) {
    vars.push_back(meta);
    objective.push_back(cost);
    return static_cast<int>(vars.size()) - 1;
  }

  double objective_value(const std::vector<std::uint8_t>& x) const {
    double total = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j)
      if (x[j]) total += objective[j];
    return total;
  }

  double max_violation(const std::vector<std::uint8_t>& x) const {
    double worst = 0.0;
    for (const auto& r : rows) worst = std::max(worst, r.violation(r.activity(x)));
    return worst;
  }

  bool is_feasible(const std::vector<std::uint8_t>& x, double tol = 1e-9) const {
    return x.size() == vars.size() && max_violation(x) <= tol;
  }

  std::size_t count_rows(RowKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(rows.begin(), rows.end(), [&](const Row& r) { return r.kind == kind; }));
  }

  std::size_t count_vars(VarKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(vars.begin(), vars.end(), [&](const VarMeta& v) { return v.kind == kind; }));
  }
};

struct BuildOptions {
  bool dominance_pruning = true;
  // Loosens the power and alpha rows by this absolute amount. Zero keeps
  // them exact; 1e-6 mimics solvers that accept that much row violation.
  double row_slack = 0.0;
};

namespace detail {

inline bool dominates(const Action& b, const Action& a) {
  if (!(b.size <= a.size && b.ce <= a.ce && b.cp >= a.cp)) return false;
  return b.size < a.size || b.ce < a.ce || b.cp > a.cp;
}

/// Removes actions dominated by another action of the same outcome. Stop
/// actions only act as dominators when `stops_may_dominate`.
inline std::vector<Action> prune_dominated(const std::vector<Action>& actions, bool stops_may_dominate) {
  std::vector<std::size_t> order(actions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return actions[a].size < actions[b].size; });
  std::vector<char> keep(actions.size(), 1);
  for (std::size_t ia = 0; ia < order.size(); ++ia) {
    const Action& a = actions[order[ia]];
    if (a.is_stop()) continue;
    for (std::size_t ib = 0; ib < order.size(); ++ib) {
      const Action& b = actions[order[ib]];
      if (b.size > a.size) break;
      if (ib == ia || !keep[order[ib]]) continue;
      if (b.is_stop() && !stops_may_dominate) continue;
      if (dominates(b, a)) {
        keep[order[ia]] = 0;
        break;
      }
    }
  }
  std::vector<Action> out;
  for (std::size_t i = 0; i < actions.size(); ++i)
    if (keep[i]) out.push_back(actions[i]);
  return out;
}

inline double size_cost(int size, int n_max, const ObjectiveSpec& obj) {
  switch (obj.kind) {
    case ObjectiveSpec::Kind::ExpectedNGamma: return std::pow(static_cast<double>(size), obj.gamma);
    case ObjectiveSpec::Kind::ExpectedExpN: return std::exp(static_cast<double>(size - n_max));
    default: return static_cast<double>(size);
  }
}

}  // namespace detail

inline BinaryLinearProgram build_blp(const CandidateTable& cands, const ConstraintFlags& flags,
                                     const ObjectiveSpec& obj, const TrialParams& params,
                                     const BuildOptions& opts = {}) {
  params.validate();
  obj.validate();
  if (flags.min_conditional_power && !(*flags.min_conditional_power >= 0.0 && *flags.min_conditional_power <= 1.0))
    throw std::invalid_argument("min_conditional_power must lie in [0,1]");
  if (!(opts.row_slack >= 0.0)) throw std::invalid_argument("row_slack must be >= 0");
  const int n1 = cands.n1;
  const int n_max = cands.n_max;
  if (cands.groups.size() != static_cast<std::size_t>(n1) + 1)
    throw std::invalid_argument("build_blp: candidate table has the wrong number of outcomes");

  BinaryLinearProgram blp;
  blp.n1 = n1;
  blp.n_max = n_max;
  blp.groups.resize(cands.groups.size());

  std::vector<double> objective_weight;
  if (obj.kind == ObjectiveSpec::Kind::PriorWeighted) {
    objective_weight = prior_weights(n1, obj.prior);
  } else {
    for (const auto& g : cands.groups) objective_weight.push_back(g.weight0);
  }

  const bool prune = opts.dominance_pruning && !flags.monotone_ce && !flags.unimodal_n;
  std::vector<int> fut_stop(cands.groups.size(), -1), eff_stop(cands.groups.size(), -1);

  for (const auto& g : cands.groups) {
    std::vector<Action> actions;
    for (const auto& a : g.actions) {
      if (!a.is_stop() && flags.min_conditional_power && a.cp < *flags.min_conditional_power) continue;
      actions.push_back(a);
    }
    if (prune) actions = detail::prune_dominated(actions, !flags.contiguous_stopping);
    for (const auto& a : actions) {
      VarMeta meta;
      meta.kind = VarKind::Assignment;
      meta.x1 = g.x1;
      meta.n2 = a.n2;
      meta.c = a.c;
      meta.size = a.size;
      meta.ce = a.ce;
      meta.cp = a.cp;
      const int j = blp.add_var(meta, objective_weight[g.x1] * detail::size_cost(a.size, n_max, obj));
      blp.groups[g.x1].push_back(j);
      if (a.is_stop()) (a.c.is_pos_inf() ? fut_stop : eff_stop)[g.x1] = j;
    }
  }

  auto group_row = [&](RowKind kind, std::string tag, Sense sense, double rhs) {
    Row r;
    r.kind = kind;
    r.tag = std::move(tag);
    r.sense = sense;
    r.rhs = rhs;
    return r;
  };
  auto append_group = [&](Row& r, int x1, auto coef_of) {
    for (int j : blp.groups[x1]) {
      r.index.push_back(j);
      r.coef.push_back(coef_of(blp.vars[j]));
    }
  };

  for (int x1 = 0; x1 <= n1; ++x1) {
    Row r = group_row(RowKind::Functionhood, "fn[" + std::to_string(x1) + "]", Sense::Eq, 1.0);
    append_group(r, x1, [](const VarMeta&) { return 1.0; });
    blp.rows.push_back(std::move(r));
  }

  {
    Row r = group_row(RowKind::Power, "power", Sense::Ge, 1.0 - params.beta - opts.row_slack);
    for (int x1 = 0; x1 <= n1; ++x1) {
      const double w = cands.groups[x1].weight1;
      append_group(r, x1, [&](const VarMeta& v) { return w * v.cp; });
    }
    blp.rows.push_back(std::move(r));
  }
  {
    Row r = group_row(RowKind::Alpha, "alpha", Sense::Le, params.alpha + opts.row_slack);
    for (int x1 = 0; x1 <= n1; ++x1) {
      const double w = cands.groups[x1].weight0;
      append_group(r, x1, [&](const VarMeta& v) { return w * v.ce; });
    }
    blp.rows.push_back(std::move(r));
  }

  if (flags.monotone_ce) {
    for (int x1 = 1; x1 <= n1; ++x1) {
      Row r = group_row(RowKind::MonotoneCe, "mono[" + std::to_string(x1) + "]", Sense::Ge, 0.0);
      append_group(r, x1, [](const VarMeta& v) { return v.ce; });
      append_group(r, x1 - 1, [](const VarMeta& v) { return -v.ce; });
      blp.rows.push_back(std::move(r));
    }
  }

  if (flags.contiguous_stopping) {
    for (int x1 = 1; x1 <= n1; ++x1) {
      const int fut = blp.add_var(VarMeta::aux(VarKind::Futility, x1), 0.0);
      const std::string idx = std::to_string(x1);
      Row link = group_row(RowKind::FutilityLink, "fut_link[" + idx + "]", Sense::Eq, 0.0);
      link.index = {fut_stop[x1], fut};
      link.coef = {1.0, -1.0};
      Row chain = group_row(RowKind::FutilityChain, "fut_chain[" + idx + "]", Sense::Ge, 0.0);
      chain.index = {fut_stop[x1 - 1], fut};
      chain.coef = {1.0, -1.0};
      blp.rows.push_back(std::move(link));
      blp.rows.push_back(std::move(chain));
    }
    for (int x1 = 0; x1 < n1; ++x1) {
      const int eff = blp.add_var(VarMeta::aux(VarKind::Efficacy, x1), 0.0);
      const std::string idx = std::to_string(x1);
      Row link = group_row(RowKind::EfficacyLink, "eff_link[" + idx + "]", Sense::Eq, 0.0);
      link.index = {eff_stop[x1], eff};
      link.coef = {1.0, -1.0};
      Row chain = group_row(RowKind::EfficacyChain, "eff_chain[" + idx + "]", Sense::Ge, 0.0);
      chain.index = {eff_stop[x1 + 1], eff};
      chain.coef = {1.0, -1.0};
      blp.rows.push_back(std::move(link));
      blp.rows.push_back(std::move(chain));
    }
  }

  if (flags.unimodal_n) {
    const double big_m = 2.0 * n_max;
    std::vector<int> peaks;
    for (int k = 0; k <= n1; ++k) peaks.push_back(blp.add_var(VarMeta::aux(VarKind::Peak, k), 0.0));
    // n(x) - n(x - 1) as a row over groups x and x - 1
    auto increment_row = [&](RowKind kind, int k, int x, Sense sense, double rhs, double peak_coef) {
      Row r = group_row(kind,
                        std::string(kind == RowKind::UnimodalUp ? "uni_up[" : "uni_down[") +
                            std::to_string(k) + "," + std::to_string(x) + "]",
                        sense, rhs);
      append_group(r, x, [](const VarMeta& v) { return static_cast<double>(v.size); });
      append_group(r, x - 1, [](const VarMeta& v) { return -static_cast<double>(v.size); });
      r.index.push_back(peaks[k]);
      r.coef.push_back(peak_coef);
      r.indicator = peaks[k];
      return r;
    };
    for (int k = 0; k <= n1; ++k) {
      for (int x = 1; x <= k; ++x)
        blp.rows.push_back(increment_row(RowKind::UnimodalUp, k, x, Sense::Ge, -big_m, -big_m));
      for (int x = k + 1; x <= n1; ++x)
        blp.rows.push_back(increment_row(RowKind::UnimodalDown, k, x, Sense::Le, big_m, big_m));
    }
    Row cover = group_row(RowKind::PeakCover, "peak_cover", Sense::Ge, 1.0);
    for (int j : peaks) {
      cover.index.push_back(j);
      cover.coef.push_back(1.0);
    }
    blp.rows.push_back(std::move(cover));
  }

  for (const auto& r : blp.rows)
    for (double v : r.coef)
      if (!std::isfinite(v)) throw std::logic_error("build_blp: non-finite coefficient in row " + r.tag);
  return blp;
}

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Design decode_solution(const std::vector<std::uint8_t>& assignment, const BinaryLinearProgram& blp) {
  if (assignment.size() != blp.num_vars()) throw DecodeError("decode: assignment has the wrong length");
  Design d;
  d.n1 = blp.n1;
  d.n_max = blp.n_max;
  d.n.resize(blp.groups.size());
  d.c.resize(blp.groups.size());
  for (std::size_t x1 = 0; x1 < blp.groups.size(); ++x1) {
    int chosen = -1;
    for (int j : blp.groups[x1]) {
      if (!assignment[j]) continue;
      if (chosen >= 0) throw DecodeError("decode: several actions selected for x1=" + std::to_string(x1));
      chosen = j;
    }
    if (chosen < 0) throw DecodeError("decode: no action selected for x1=" + std::to_string(x1));
    d.n[x1] = blp.vars[chosen].size;
    d.c[x1] = blp.vars[chosen].c;
  }
  return d;
}

/// Sets the auxiliary variables implied by the assignment part of x.
inline void complete_auxiliaries(std::vector<std::uint8_t>& x, const BinaryLinearProgram& blp) {
  std::vector<int> size(blp.groups.size(), -1);
  std::vector<CriticalValue> crit(blp.groups.size());
  for (std::size_t g = 0; g < blp.groups.size(); ++g)
    for (int j : blp.groups[g])
      if (x[j]) {
        size[g] = blp.vars[j].size;
        crit[g] = blp.vars[j].c;
      }
  auto is_stop = [&](int g, bool futility) {
    return size[g] == blp.n1 && (futility ? crit[g].is_pos_inf() : crit[g].is_neg_inf());
  };
  int chosen_peak = -1;
  for (std::size_t j = 0; j < blp.vars.size(); ++j) {
    const auto& v = blp.vars[j];
    if (v.kind == VarKind::Futility) x[j] = is_stop(v.x1, true);
    if (v.kind == VarKind::Efficacy) x[j] = is_stop(v.x1, false);
    if (v.kind == VarKind::Peak) {
      x[j] = 0;
      if (chosen_peak >= 0) continue;
      const int k = v.x1;
      bool ok = true;
      for (int t = 1; t <= blp.n1 && ok; ++t) {
        const int diff = size[t] - size[t - 1];
        ok = (t <= k) ? diff >= 0 : diff <= 0;
      }
      if (ok) {
        chosen_peak = k;
        x[j] = 1;
      }
    }
  }
}

/// Binary point selecting the design's action for every outcome. Throws if
/// some action is not a variable of this program.
inline std::vector<std::uint8_t> encode_design(const Design& d, const BinaryLinearProgram& blp) {
  require_valid(d);
  if (d.n1 != blp.n1) throw std::invalid_argument("encode: stage-one size mismatch");
  std::vector<std::uint8_t> x(blp.num_vars(), 0);
  for (int x1 = 0; x1 <= d.n1; ++x1) {
    bool found = false;
    for (int j : blp.groups[x1]) {
      const auto& v = blp.vars[j];
      if (v.size == d.n[x1] && v.c == d.c[x1]) {
        x[j] = 1;
        found = true;
        break;
      }
    }
    if (!found) throw std::invalid_argument("encode: action for x1=" + std::to_string(x1) + " not in program");
  }
  complete_auxiliaries(x, blp);
  return x;
}

inline const char* sense_token(Sense s) {
  switch (s) {
    case Sense::Le: return "<=";
    case Sense::Ge: return ">=";
    default: return "=";
  }
}

/// One row per line: tag, sense, rhs, then "coef name" terms.
inline void write_program_text(std::ostream& os, const BinaryLinearProgram& blp) {
  os.precision(17);
  os << "objective min";
  for (std::size_t j = 0; j < blp.vars.size(); ++j)
    if (blp.objective[j] != 0.0) os << ' ' << blp.objective[j] << ' ' << blp.vars[j].name();
  os << '\n';
  for (const auto& r : blp.rows) {
    os << r.tag << ' ' << sense_token(r.sense) << ' ' << r.rhs;
    for (std::size_t k = 0; k < r.index.size(); ++k) os << ' ' << r.coef[k] << ' ' << blp.vars[r.index[k]].name();
    os << '\n';
  }
  os << "binary " << blp.vars.size() << '\n';
}

}  // namespace twostage
