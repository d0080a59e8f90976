// SPDX-License-Identifier: Apache-2.0
//
// Exact branch-and-bound for the assignment programs built by
// program_builder.hpp, and an exhaustive oracle for tiny instances.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <queue>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "twostage/lp_simplex.hpp"
#include "twostage/program_builder.hpp"

namespace twostage {

struct SolverOptions {
  double feasibility_tol = 1e-9;
  double optimality_gap = 0.0;
  long node_limit = -1;        // < 0: unlimited
  double time_limit = -1.0;    // seconds, < 0: none
  int threads = 1;
  // Only solutions strictly better than this value are of interest.
  std::optional<double> objective_cutoff;
  std::ostream* node_log = nullptr;

  void validate() const {
    if (!(feasibility_tol > 0.0)) throw std::invalid_argument("solver: feasibility tolerance must be positive");
    if (!(optimality_gap >= 0.0)) throw std::invalid_argument("solver: optimality gap must be >= 0");
    if (threads < 1) throw std::invalid_argument("solver: threads must be >= 1");
  }
};

enum class SolveStatus { Optimal, Infeasible, NodeLimit, TimeLimit, Cutoff };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::NodeLimit: return "node_limit";
    case SolveStatus::TimeLimit: return "time_limit";
    default: return "cutoff";
  }
}

struct Solution {
  SolveStatus status = SolveStatus::Infeasible;
  std::vector<std::uint8_t> assignment;
  double objective = std::numeric_limits<double>::infinity();
  double bound = -std::numeric_limits<double>::infinity();
  long nodes_explored = 0;
  long lp_iterations = 0;

  bool has_solution() const { return !assignment.empty(); }
};

/// Variable fixing: -1 free, 0 or 1 fixed.
using Fixing = std::vector<std::int8_t>;

struct Relaxation {
  bool feasible = false;
  double bound = std::numeric_limits<double>::infinity();
  std::vector<double> point;           // all variables
  std::vector<double> reduced_cost;    // free variables, 0 elsewhere
  std::vector<int> support;            // LP columns worth keeping for children
  long iterations = 0;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

constexpr double kCompareTol = 1e-9;

/// Column-wise view of the program plus the role information the search uses.
class ProgramIndex {
 public:
  explicit ProgramIndex(const BinaryLinearProgram& blp) : blp_(blp) {
    const std::size_t n = blp.num_vars();
    col_row_.resize(n);
    col_val_.resize(n);
    group_of_.assign(n, -1);
    indicator_rows_.resize(n);
    for (std::size_t g = 0; g < blp.groups.size(); ++g)
      for (int j : blp.groups[g]) group_of_[j] = static_cast<int>(g);
    for (std::size_t r = 0; r < blp.rows.size(); ++r) {
      const auto& row = blp.rows[r];
      if (row.index.size() != row.coef.size()) throw SolverError("malformed row " + row.tag);
      for (std::size_t k = 0; k < row.index.size(); ++k) {
        const int j = row.index[k];
        if (j < 0 || static_cast<std::size_t>(j) >= n) throw SolverError("row " + row.tag + " references unknown variable");
        col_row_[j].push_back(static_cast<int>(r));
        col_val_[j].push_back(row.coef[k]);
      }
      if (row.indicator >= 0) indicator_rows_[row.indicator].push_back(static_cast<int>(r));
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (blp.vars[j].kind == VarKind::Assignment && group_of_[j] < 0)
        throw SolverError("assignment variable outside every group");
      if (blp.vars[j].kind == VarKind::Peak) peaks_.push_back(static_cast<int>(j));
      if (blp.vars[j].kind != VarKind::Assignment) aux_.push_back(static_cast<int>(j));
    }
    // Branching splits a group along one ordering of its actions. Without
    // shape rows, conditional power separates the LP's fractional pairs far
    // better; with them, the canonical size order matches how those rows bite.
    const bool shape_rows = std::any_of(blp.rows.begin(), blp.rows.end(), [](const Row& r) {
      return r.kind != RowKind::Functionhood && r.kind != RowKind::Power && r.kind != RowKind::Alpha;
    });
    branch_order_ = blp.groups;
    if (!shape_rows)
      for (auto& g : branch_order_)
        std::stable_sort(g.begin(), g.end(), [&](int a, int b) { return blp.vars[a].cp < blp.vars[b].cp; });
    for (std::size_t r = 0; r < blp.rows.size(); ++r) {
      const auto& row = blp.rows[r];
      bool small = row.kind != RowKind::Functionhood && row.index.size() <= 64;
      if (small) small_rows_.push_back(static_cast<int>(r));
    }
  }

  const BinaryLinearProgram& blp() const { return blp_; }
  const std::vector<int>& col_rows(int j) const { return col_row_[j]; }
  const std::vector<double>& col_vals(int j) const { return col_val_[j]; }
  int group_of(int j) const { return group_of_[j]; }
  const std::vector<int>& peaks() const { return peaks_; }
  const std::vector<int>& aux() const { return aux_; }
  const std::vector<int>& small_rows() const { return small_rows_; }
  const std::vector<int>& rows_of_indicator(int j) const { return indicator_rows_[j]; }
  /// Group members in the order used to split a group when branching.
  const std::vector<int>& branch_order(int g) const { return branch_order_[g]; }

 private:
  const BinaryLinearProgram& blp_;
  std::vector<std::vector<int>> col_row_;
  std::vector<std::vector<double>> col_val_;
  std::vector<int> group_of_;
  std::vector<int> peaks_;
  std::vector<int> aux_;
  std::vector<int> small_rows_;
  std::vector<std::vector<int>> indicator_rows_;
  std::vector<std::vector<int>> branch_order_;
};

inline lp::RowSense to_lp(Sense s) {
  switch (s) {
    case Sense::Le: return lp::RowSense::Le;
    case Sense::Ge: return lp::RowSense::Ge;
    default: return lp::RowSense::Eq;
  }
}

// LP columns ignore coefficients this small; binary feasibility is always
// checked against the full rows.
constexpr double kDropCoefficient = 1e-11;

/// LP relaxation at a node. Rows whose indicator is not fixed to one are
/// left out, which only enlarges the feasible region.
inline Relaxation solve_relaxation_with(const ProgramIndex& idx, const Fixing& fix, const std::vector<int>& warm,
                                        double tol, lp::SimplexTolerances lp_tol) {
  const auto& blp = idx.blp();
  const std::size_t n = blp.num_vars();
  Relaxation out;
  out.point.assign(n, 0.0);
  out.reduced_cost.assign(n, 0.0);

  double constant = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    if (fix[j] == 1) {
      constant += blp.objective[j];
      out.point[j] = 1.0;
    }

  std::vector<int> local(blp.rows.size(), -1);
  std::vector<lp::RowSense> sense;
  std::vector<double> rhs;
  for (std::size_t r = 0; r < blp.rows.size(); ++r) {
    const auto& row = blp.rows[r];
    if (row.indicator >= 0 && fix[row.indicator] != 1) continue;
    double fixed_part = 0.0;
    bool has_free = false;
    for (std::size_t k = 0; k < row.index.size(); ++k) {
      const int j = row.index[k];
      if (fix[j] == 1) fixed_part += row.coef[k];
      else if (fix[j] < 0 && row.coef[k] != 0.0) has_free = true;
    }
    const double residual = row.rhs - fixed_part;
    if (!has_free) {
      const bool ok = row.sense == Sense::Le   ? 0.0 <= residual + tol
                      : row.sense == Sense::Ge ? 0.0 >= residual - tol
                                               : std::abs(residual) <= tol;
      if (!ok) return out;
      continue;
    }
    local[r] = static_cast<int>(sense.size());
    sense.push_back(to_lp(row.sense));
    rhs.push_back(residual);
  }

  lp::BoundedSimplex simplex(sense, rhs, lp_tol);
  std::vector<int> lp_col_of(n, -1);
  std::vector<int> var_of_col;
  auto add = [&](int j) {
    if (lp_col_of[j] >= 0) return;
    lp::SparseColumn col;
    const auto& rows = idx.col_rows(j);
    const auto& vals = idx.col_vals(j);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const int l = local[rows[k]];
      if (l >= 0 && std::abs(vals[k]) > kDropCoefficient) {
        col.row.push_back(l);
        col.value.push_back(vals[k]);
      }
    }
    const int c = simplex.add_column(blp.objective[j], 1.0, std::move(col));
    lp_col_of[j] = c;
    if (static_cast<int>(var_of_col.size()) <= c) var_of_col.resize(c + 1, -1);
    var_of_col[c] = j;
  };

  for (int j : warm)
    if (fix[j] < 0) add(j);
  for (const auto& g : blp.groups)
    for (int j : g)
      if (fix[j] < 0 && blp.vars[j].is_stop_action()) add(j);
  for (int j : idx.aux())
    if (fix[j] < 0) add(j);

  // price every free column outside the working set with the current duals
  std::vector<std::pair<double, int>> candidates;
  auto price = [&](bool collect) {
    const auto y = simplex.duals();
    const bool phase_one = simplex.phase() == 1;
    candidates.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (fix[j] >= 0 || lp_col_of[j] >= 0) continue;
      double d = phase_one ? 0.0 : blp.objective[j];
      const auto& rows = idx.col_rows(static_cast<int>(j));
      const auto& vals = idx.col_vals(static_cast<int>(j));
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const int l = local[rows[k]];
        if (l >= 0 && std::abs(vals[k]) > kDropCoefficient) d -= y[l] * vals[k];
      }
      if (!phase_one) out.reduced_cost[j] = d;
      if (collect && d < -tol) candidates.push_back({d, static_cast<int>(j)});
    }
  };

  auto status = simplex.solve();
  for (int round = 0;; ++round) {
    if (status == lp::LpStatus::IterationLimit) throw SolverError("LP iteration limit reached");
    price(true);
    if (candidates.empty()) break;
    const std::size_t batch = std::max<std::size_t>(32, sense.size());
    if (candidates.size() > batch) {
      std::nth_element(candidates.begin(), candidates.begin() + static_cast<long>(batch), candidates.end());
      candidates.resize(batch);
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });
    for (const auto& c : candidates) add(c.second);
    status = simplex.resume();
    if (round > 100000) throw SolverError("column generation did not converge");
  }
  out.iterations = simplex.iterations();
  if (status == lp::LpStatus::Infeasible || simplex.phase() == 1) return out;

  out.feasible = true;
  out.bound = constant;
  for (std::size_t c = 0; c < var_of_col.size(); ++c) {
    const int j = var_of_col[c];
    if (j < 0) continue;
    const double v = std::clamp(simplex.value(static_cast<int>(c)), 0.0, 1.0);
    out.point[j] = v;
    out.bound += blp.objective[j] * v;
    out.reduced_cost[j] = simplex.is_basic(static_cast<int>(c)) ? 0.0 : simplex.reduced_cost(static_cast<int>(c));
    if (simplex.is_basic(static_cast<int>(c)) || v > 1e-12) out.support.push_back(j);
  }
  std::sort(out.support.begin(), out.support.end());
  return out;
}

/// Retries once with a stricter pivot tolerance if the basis degenerates numerically.
inline Relaxation solve_relaxation(const ProgramIndex& idx, const Fixing& fix, const std::vector<int>& warm,
                                   double tol) {
  try {
    return solve_relaxation_with(idx, fix, warm, tol, {});
  } catch (const lp::SingularBasis&) {
    lp::SimplexTolerances strict;
    strict.pivot = 1e-6;
    return solve_relaxation_with(idx, fix, {}, tol, strict);
  }
}

}  // namespace detail

/// LP bound for the program under partial fixings (-1 free, 0/1 fixed).
/// Returns +inf as bound when the relaxation is infeasible.
inline Relaxation lp_relaxation(const BinaryLinearProgram& blp, const Fixing& fixings) {
  if (fixings.size() != blp.num_vars()) throw std::invalid_argument("lp_relaxation: fixing length mismatch");
  for (auto v : fixings)
    if (v < -1 || v > 1) throw std::invalid_argument("lp_relaxation: fixings must be -1, 0 or 1");
  detail::ProgramIndex idx(blp);
  return detail::solve_relaxation(idx, fixings, {}, 1e-9);
}

class BranchAndBound {
 public:
  BranchAndBound(const BinaryLinearProgram& blp, SolverOptions opts)
      : blp_(blp), idx_(blp), opts_(std::move(opts)) {
    opts_.validate();
  }

  Solution run() {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t n = blp_.num_vars();
    for (const auto& g : blp_.groups)
      if (g.empty()) return finish(SolveStatus::Infeasible);

    auto root = std::make_shared<Node>();
    root->fix.assign(n, -1);
    root->bound = -std::numeric_limits<double>::infinity();
    root->id = next_id_++;
    std::priority_queue<std::shared_ptr<Node>, std::vector<std::shared_ptr<Node>>, NodeOrder> open;
    std::shared_ptr<Node> dive = root;

    while (dive || !open.empty()) {
      std::shared_ptr<Node> node;
      if (dive) {
        node = std::move(dive);
        dive.reset();
      } else {
        node = open.top();
        open.pop();
      }
      if (opts_.node_limit >= 0 && sol_.nodes_explored >= opts_.node_limit) {
        open.push(node);
        return finish_with_open(SolveStatus::NodeLimit, open);
      }
      if (opts_.time_limit >= 0.0) {
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (elapsed > opts_.time_limit) {
          open.push(node);
          return finish_with_open(SolveStatus::TimeLimit, open);
        }
      }
      if (pruned(node->bound)) continue;
      ++sol_.nodes_explored;
      auto children = process(*node);
      if (children.empty()) continue;
      // plunge into the first child, keep the rest for best-bound selection
      if (children.front()->prefer_dive) {
        dive = children.front();
        for (std::size_t k = 1; k < children.size(); ++k) open.push(children[k]);
      } else {
        for (auto& c : children) open.push(c);
      }
    }
    return finish(SolveStatus::Optimal);
  }

 private:
  struct Node {
    Fixing fix;
    double bound = 0.0;
    int depth = 0;
    long id = 0;
    bool prefer_dive = false;
    std::shared_ptr<const std::vector<int>> warm;
  };

  struct NodeOrder {
    bool operator()(const std::shared_ptr<Node>& a, const std::shared_ptr<Node>& b) const {
      if (a->bound != b->bound) return a->bound > b->bound;
      return a->id > b->id;
    }
  };

  double threshold() const {
    double t = std::numeric_limits<double>::infinity();
    if (sol_.has_solution()) t = sol_.objective - std::max(detail::kCompareTol, opts_.optimality_gap);
    if (opts_.objective_cutoff) t = std::min(t, *opts_.objective_cutoff - detail::kCompareTol);
    return t;
  }

  bool pruned(double bound) const { return bound >= threshold(); }

  Solution finish(SolveStatus status) {
    if (status == SolveStatus::Optimal) {
      if (sol_.has_solution()) {
        sol_.bound = sol_.objective;
      } else {
        sol_.status = opts_.objective_cutoff ? SolveStatus::Cutoff : SolveStatus::Infeasible;
        sol_.bound = opts_.objective_cutoff ? *opts_.objective_cutoff : std::numeric_limits<double>::infinity();
        return sol_;
      }
    }
    sol_.status = status;
    return sol_;
  }

  template <class Queue>
  Solution finish_with_open(SolveStatus status, Queue& open) {
    double lb = sol_.has_solution() ? sol_.objective : std::numeric_limits<double>::infinity();
    while (!open.empty()) {
      lb = std::min(lb, open.top()->bound);
      open.pop();
    }
    sol_.bound = lb;
    sol_.status = status;
    return sol_;
  }

  /// Group and small-row propagation. Returns false on contradiction.
  bool propagate(Fixing& fix) const {
    for (int pass = 0; pass < 20; ++pass) {
      bool changed = false;
      for (const auto& g : blp_.groups) {
        int free_count = 0, one = -1, last_free = -1;
        for (int j : g) {
          if (fix[j] == 1) {
            if (one >= 0) return false;
            one = j;
          } else if (fix[j] < 0) {
            ++free_count;
            last_free = j;
          }
        }
        if (one >= 0) {
          for (int j : g)
            if (j != one && fix[j] < 0) {
              fix[j] = 0;
              changed = true;
            }
        } else if (free_count == 0) {
          return false;
        } else if (free_count == 1) {
          fix[last_free] = 1;
          changed = true;
        }
      }
      for (int r : idx_.small_rows()) {
        const auto& row = blp_.rows[r];
        double lo = 0.0, hi = 0.0;
        for (std::size_t k = 0; k < row.index.size(); ++k) {
          const int j = row.index[k];
          const double a = row.coef[k];
          if (fix[j] == 1) {
            lo += a;
            hi += a;
          } else if (fix[j] < 0) {
            (a > 0 ? hi : lo) += a;
          }
        }
        const double tol = opts_.feasibility_tol;
        const bool need_le = row.sense != Sense::Ge;
        const bool need_ge = row.sense != Sense::Le;
        if (need_le && lo > row.rhs + tol) return false;
        if (need_ge && hi < row.rhs - tol) return false;
        for (std::size_t k = 0; k < row.index.size(); ++k) {
          const int j = row.index[k];
          const double a = row.coef[k];
          if (fix[j] >= 0 || a == 0.0) continue;
          // value 1 adds max(a,0) to lo and min(a,0) to hi; value 0 the reverse
          if (need_le) {
            if (a > 0 && lo + a > row.rhs + tol) { fix[j] = 0; changed = true; continue; }
            if (a < 0 && lo - a > row.rhs + tol) { fix[j] = 1; changed = true; continue; }
          }
          if (need_ge) {
            if (a > 0 && hi - a < row.rhs - tol) { fix[j] = 1; changed = true; continue; }
            if (a < 0 && hi + a < row.rhs - tol) { fix[j] = 0; changed = true; continue; }
          }
        }
      }
      if (!changed) return true;
    }
    return true;
  }

  /// Fills auxiliary variables for an integral assignment; false if no
  /// completion satisfies every row.
  bool complete(std::vector<std::uint8_t>& x, const Fixing& fix) const {
    for (int j : idx_.aux()) x[j] = 0;
    complete_auxiliaries(x, blp_);
    for (int j : idx_.aux()) {
      const auto kind = blp_.vars[j].kind;
      if (kind == VarKind::Peak) continue;
      if (fix[j] >= 0 && fix[j] != x[j]) return false;
    }
    const auto& peaks = idx_.peaks();
    if (!peaks.empty()) {
      for (int p : peaks) x[p] = 0;
      bool any = false;
      for (int p : peaks) {
        if (fix[p] == 0) continue;
        x[p] = 1;
        bool ok = true;
        for (int r : idx_.rows_of_indicator(p)) {
          const auto& row = blp_.rows[r];
          if (row.violation(row.activity(x)) > opts_.feasibility_tol) {
            ok = false;
            break;
          }
        }
        if (fix[p] == 1 && !ok) return false;
        if (!ok) x[p] = 0;
        any = any || ok;
      }
      if (!any) return false;
      // keep a single peak unless more are forced
      bool kept = false;
      for (int p : peaks) {
        if (!x[p]) continue;
        if (fix[p] == 1) continue;
        if (kept) x[p] = 0;
        kept = true;
      }
    }
    return blp_.max_violation(x) <= opts_.feasibility_tol;
  }

  /// Lexicographic order on (n(.), c(.)) of two integral assignments.
  bool lex_less(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) const {
    auto chosen = [&](const std::vector<std::uint8_t>& x, const std::vector<int>& g) {
      for (int j : g)
        if (x[j]) return j;
      return -1;
    };
    std::vector<int> ca, cb;
    for (const auto& g : blp_.groups) {
      ca.push_back(chosen(a, g));
      cb.push_back(chosen(b, g));
    }
    for (std::size_t k = 0; k < ca.size(); ++k) {
      const int sa = blp_.vars[ca[k]].size, sb = blp_.vars[cb[k]].size;
      if (sa != sb) return sa < sb;
    }
    for (std::size_t k = 0; k < ca.size(); ++k) {
      const auto& va = blp_.vars[ca[k]].c;
      const auto& vb = blp_.vars[cb[k]].c;
      if (!(va == vb)) return va < vb;
    }
    return false;
  }

  void offer(const std::vector<std::uint8_t>& x) {
    const double obj = blp_.objective_value(x);
    if (opts_.objective_cutoff && obj >= *opts_.objective_cutoff - detail::kCompareTol) return;
    if (!sol_.has_solution() || obj < sol_.objective - detail::kCompareTol ||
        (obj <= sol_.objective + detail::kCompareTol && lex_less(x, sol_.assignment))) {
      sol_.assignment = x;
      sol_.objective = obj;
    }
  }

  /// Largest-value rounding followed by a greedy repair of the coupling rows.
  void round_and_repair(const Relaxation& rel, const Fixing& fix) {
    const std::size_t n = blp_.num_vars();
    std::vector<std::uint8_t> x(n, 0);
    std::vector<int> choice(blp_.groups.size(), -1);
    for (std::size_t g = 0; g < blp_.groups.size(); ++g) {
      double best = -1.0;
      for (int j : blp_.groups[g]) {
        if (fix[j] == 0) continue;
        if (rel.point[j] > best + 1e-12) {
          best = rel.point[j];
          choice[g] = j;
        }
      }
      if (choice[g] < 0) return;
      x[choice[g]] = 1;
    }
    for (int iter = 0; iter < 4 * static_cast<int>(blp_.groups.size()); ++iter) {
      if (complete(x, fix)) {
        offer(x);
        return;
      }
      // only the power and alpha rows are repaired
      double power_short = 0.0, alpha_excess = 0.0;
      const Row* power = nullptr;
      const Row* alpha = nullptr;
      for (const auto& r : blp_.rows) {
        if (r.kind == RowKind::Power) {
          power = &r;
          power_short = r.violation(r.activity(x));
        }
        if (r.kind == RowKind::Alpha) {
          alpha = &r;
          alpha_excess = r.violation(r.activity(x));
        }
      }
      if (!power || !alpha || (power_short <= 0.0 && alpha_excess <= 0.0)) return;
      const double w_short = power_short > 0.0 ? 1.0 : 0.0;
      const double w_excess = alpha_excess > 0.0 ? 1.0 : 0.0;
      int best_g = -1, best_j = -1;
      double best_score = 0.0;
      for (std::size_t g = 0; g < blp_.groups.size(); ++g) {
        const int cur = choice[g];
        const auto& vc = blp_.vars[cur];
        for (int j : blp_.groups[g]) {
          if (j == cur || fix[j] == 0) continue;
          const auto& vj = blp_.vars[j];
          const double dpow = (vj.cp - vc.cp);
          const double dce = (vj.ce - vc.ce);
          const double gain = w_short * dpow - w_excess * dce;
          if (gain <= 0.0) continue;
          if (w_short == 0.0 && dpow < 0.0) continue;
          if (w_excess == 0.0 && dce > 0.0) continue;
          const double dobj = blp_.objective[j] - blp_.objective[cur];
          const double score = gain / std::max(dobj, 1e-12);
          if (score > best_score) {
            best_score = score;
            best_g = static_cast<int>(g);
            best_j = j;
          }
        }
      }
      if (best_g < 0) return;
      x[choice[best_g]] = 0;
      choice[best_g] = best_j;
      x[best_j] = 1;
    }
  }

  std::vector<std::shared_ptr<Node>> process(Node& node) {
    std::vector<std::shared_ptr<Node>> children;
    if (!propagate(node.fix)) return children;
    const auto rel =
        detail::solve_relaxation(idx_, node.fix, node.warm ? *node.warm : std::vector<int>{}, opts_.feasibility_tol);
    sol_.lp_iterations += rel.iterations;
    if (opts_.node_log)
      *opts_.node_log << node.depth << ' ' << (rel.feasible ? rel.bound : std::numeric_limits<double>::infinity())
                      << ' ' << sol_.objective << '\n';
    if (!rel.feasible) return children;
    node.bound = std::max(node.bound, rel.bound);
    if (pruned(node.bound)) return children;

    round_and_repair(rel, node.fix);
    if (pruned(node.bound)) return children;

    // reduced-cost fixing against the incumbent
    const double limit = threshold();
    if (std::isfinite(limit)) {
      for (std::size_t j = 0; j < rel.point.size(); ++j) {
        if (node.fix[j] >= 0) continue;
        const double d = rel.reduced_cost[j];
        if (rel.point[j] <= 1e-9 && node.bound + d >= limit) node.fix[j] = 0;
        else if (rel.point[j] >= 1.0 - 1e-9 && node.bound - d >= limit) node.fix[j] = 1;
      }
    }

    // integral assignment?
    int branch_group = -1;
    double most_fractional = 1e-9;
    for (std::size_t g = 0; g < blp_.groups.size(); ++g) {
      double top = 0.0;
      for (int j : blp_.groups[g]) top = std::max(top, rel.point[j]);
      const double frac = 1.0 - top;
      if (frac > most_fractional) {
        most_fractional = frac;
        branch_group = static_cast<int>(g);
      }
    }

    auto warm = std::make_shared<const std::vector<int>>(rel.support);
    auto make_child = [&](Fixing fix) {
      auto c = std::make_shared<Node>();
      c->fix = std::move(fix);
      c->bound = node.bound;
      c->depth = node.depth + 1;
      c->id = next_id_++;
      c->warm = warm;
      return c;
    };

    std::vector<int> free_peaks;
    bool peak_fixed = false;
    for (int p : idx_.peaks()) {
      if (node.fix[p] < 0) free_peaks.push_back(p);
      if (node.fix[p] == 1) peak_fixed = true;
    }
    const bool peaks_pending = !peak_fixed && !free_peaks.empty();

    if (branch_group < 0) {
      std::vector<std::uint8_t> x(blp_.num_vars(), 0);
      for (const auto& g : blp_.groups)
        for (int j : g)
          if (rel.point[j] >= 0.5) x[j] = 1;
      if (complete(x, node.fix)) {
        offer(x);
        return children;
      }
      if (!peaks_pending) {
        // an aux variable is fractional or the relaxation is numerically off
        for (int j : idx_.aux()) {
          if (node.fix[j] >= 0) continue;
          const double v = rel.point[j];
          if (v > 1e-9 && v < 1.0 - 1e-9) {
            Fixing f0 = node.fix, f1 = node.fix;
            f0[j] = 0;
            f1[j] = 1;
            children.push_back(make_child(std::move(f1)));
            children.push_back(make_child(std::move(f0)));
            return children;
          }
        }
        return children;
      }
    }

    if (peaks_pending && (branch_group < 0 || node.depth == 0)) {
      // one child per admissible peak position; the others are switched off
      for (int p : free_peaks) {
        Fixing f = node.fix;
        for (int q : free_peaks) f[q] = (q == p) ? 1 : 0;
        children.push_back(make_child(std::move(f)));
      }
      return children;
    }

    // split the free actions of the most fractional group in branching order
    const auto& g = idx_.branch_order(branch_group);
    std::vector<int> free_actions;
    for (int j : g)
      if (node.fix[j] < 0) free_actions.push_back(j);
    double cum = 0.0;
    std::size_t split = 0;
    int last_positive = -1;
    for (std::size_t k = 0; k < free_actions.size(); ++k)
      if (rel.point[free_actions[k]] > 1e-9) last_positive = static_cast<int>(k);
    for (std::size_t k = 0; k < free_actions.size(); ++k) {
      cum += rel.point[free_actions[k]];
      if (cum >= 0.5 - 1e-12) {
        split = k + 1;
        break;
      }
    }
    if (static_cast<int>(split) > last_positive) split = static_cast<std::size_t>(last_positive);
    if (split == 0) split = 1;
    double left_mass = 0.0;
    for (std::size_t k = 0; k < split; ++k) left_mass += rel.point[free_actions[k]];

    Fixing left = node.fix, right = node.fix;
    for (std::size_t k = 0; k < free_actions.size(); ++k) (k < split ? right : left)[free_actions[k]] = 0;
    auto lc = make_child(std::move(left));
    auto rc = make_child(std::move(right));
    if (left_mass >= 0.5) {
      lc->prefer_dive = true;
      children.push_back(lc);
      children.push_back(rc);
    } else {
      rc->prefer_dive = true;
      children.push_back(rc);
      children.push_back(lc);
    }
    return children;
  }

  const BinaryLinearProgram& blp_;
  detail::ProgramIndex idx_;
  SolverOptions opts_;
  Solution sol_;
  long next_id_ = 0;
};

inline Solution solve(const BinaryLinearProgram& blp, const SolverOptions& opts = {}) {
  return BranchAndBound(blp, opts).run();
}

class GuardError : public std::length_error {
 public:
  using std::length_error::length_error;
};

struct BruteForceLimits {
  std::size_t max_groups = 8;
  double max_combinations = 5e6;
};

/// Exhaustive enumeration of one action per group plus the best admissible
/// auxiliary values. Independent of the LP machinery; test oracle only.
inline Solution brute_force(const BinaryLinearProgram& blp, const BruteForceLimits& limits = {},
                            double tol = 1e-9) {
  const std::size_t ng = blp.groups.size();
  if (ng > limits.max_groups) throw GuardError("brute_force: too many stage-one outcomes");
  double combos = 1.0;
  for (const auto& g : blp.groups) combos *= static_cast<double>(g.size());
  if (combos > limits.max_combinations) throw GuardError("brute_force: enumeration too large");

  const std::size_t n = blp.num_vars();
  std::vector<char> in_group(n, 0);
  for (const auto& g : blp.groups)
    for (int j : g) in_group[j] = 1;
  std::vector<int> aux;
  for (std::size_t j = 0; j < n; ++j)
    if (!in_group[j]) aux.push_back(static_cast<int>(j));
  std::vector<int> aux_pos(n, -1);
  for (std::size_t k = 0; k < aux.size(); ++k) aux_pos[aux[k]] = static_cast<int>(k);

  // classify rows by how many auxiliary variables they touch
  std::vector<std::vector<int>> single_rows(aux.size());
  std::vector<int> plain_rows, multi_rows;
  std::vector<char> in_multi(aux.size(), 0);
  for (std::size_t r = 0; r < blp.rows.size(); ++r) {
    std::vector<int> touched;
    for (int j : blp.rows[r].index)
      if (aux_pos[j] >= 0 && std::find(touched.begin(), touched.end(), aux_pos[j]) == touched.end())
        touched.push_back(aux_pos[j]);
    if (touched.empty()) plain_rows.push_back(static_cast<int>(r));
    else if (touched.size() == 1) single_rows[touched[0]].push_back(static_cast<int>(r));
    else {
      multi_rows.push_back(static_cast<int>(r));
      for (int a : touched) in_multi[a] = 1;
    }
  }
  std::vector<int> multi_aux;
  for (std::size_t k = 0; k < aux.size(); ++k)
    if (in_multi[k]) multi_aux.push_back(static_cast<int>(k));
  if (multi_aux.size() > 20) throw GuardError("brute_force: too many coupled auxiliary variables");

  Solution best;
  best.status = SolveStatus::Infeasible;
  std::vector<std::size_t> digit(ng, 0);
  std::vector<std::uint8_t> x(n, 0);
  auto satisfied = [&](int r) {
    const auto& row = blp.rows[r];
    return row.violation(row.activity(x)) <= tol;
  };

  for (;;) {
    std::fill(x.begin(), x.end(), 0);
    for (std::size_t g = 0; g < ng; ++g) x[blp.groups[g][digit[g]]] = 1;
    ++best.nodes_explored;

    bool ok = std::all_of(plain_rows.begin(), plain_rows.end(), satisfied);
    // admissible values per auxiliary variable from the rows it alone touches
    std::vector<std::uint8_t> allowed(aux.size(), 0);  // bit0: value 0, bit1: value 1
    for (std::size_t k = 0; k < aux.size() && ok; ++k) {
      for (int v = 0; v <= 1; ++v) {
        x[aux[k]] = static_cast<std::uint8_t>(v);
        if (std::all_of(single_rows[k].begin(), single_rows[k].end(), satisfied))
          allowed[k] |= static_cast<std::uint8_t>(1u << v);
      }
      x[aux[k]] = 0;
      if (!allowed[k]) ok = false;
    }
    double obj = std::numeric_limits<double>::infinity();
    if (ok) {
      double base = 0.0;
      for (std::size_t g = 0; g < ng; ++g) base += blp.objective[blp.groups[g][digit[g]]];
      for (std::size_t k = 0; k < aux.size(); ++k) {
        if (in_multi[k]) continue;
        const int j = aux[k];
        const bool take_one = allowed[k] == 2 || (allowed[k] == 3 && blp.objective[j] < 0.0);
        x[j] = take_one ? 1 : 0;
        base += take_one ? blp.objective[j] : 0.0;
      }
      double best_multi = std::numeric_limits<double>::infinity();
      std::vector<std::uint8_t> best_bits;
      const std::size_t nm = multi_aux.size();
      for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << nm); ++mask) {
        double extra = 0.0;
        bool admissible = true;
        for (std::size_t t = 0; t < nm && admissible; ++t) {
          const int k = multi_aux[t];
          const int v = static_cast<int>((mask >> t) & 1u);
          if (!(allowed[k] & (1u << v))) admissible = false;
          x[aux[k]] = static_cast<std::uint8_t>(v);
          if (v) extra += blp.objective[aux[k]];
        }
        if (!admissible) continue;
        if (!std::all_of(multi_rows.begin(), multi_rows.end(), satisfied)) continue;
        if (extra < best_multi) {
          best_multi = extra;
          best_bits.assign(nm, 0);
          for (std::size_t t = 0; t < nm; ++t) best_bits[t] = static_cast<std::uint8_t>((mask >> t) & 1u);
        }
      }
      if (std::isfinite(best_multi)) {
        for (std::size_t t = 0; t < nm; ++t) x[aux[multi_aux[t]]] = best_bits[t];
        obj = base + best_multi;
      }
    }
    if (obj < best.objective - 1e-12) {
      best.objective = obj;
      best.assignment = x;
      best.status = SolveStatus::Optimal;
    }

    std::size_t g = 0;
    while (g < ng && ++digit[g] == blp.groups[g].size()) digit[g++] = 0;
    if (g == ng) break;
  }
  if (best.status == SolveStatus::Optimal) best.bound = best.objective;
  return best;
}

}  // namespace twostage
