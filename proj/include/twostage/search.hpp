// SPDX-License-Identifier: Apache-2.0
//
// Outer search over the stage-one size and the classical Simon two-stage
// designs used to size the search space.

#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "twostage/blp_solver.hpp"
#include "twostage/design.hpp"
#include "twostage/program_builder.hpp"

namespace twostage {

/// Futility-only group-sequential two-stage design: stop after n1 patients
/// if at most r1 respond, otherwise treat n_total and reject if more than r
/// respond.
struct SimonDesign {
  enum class Type { Optimal, Minimax };
  int r1 = 0;
  int n1 = 0;
  int r = 0;
  int n_total = 0;
  double expected_n_null = 0.0;
  double type1 = 0.0;
  double power = 0.0;
  Type type = Type::Optimal;

  /// Same decisions as an adaptive design. Outcomes already above r stop
  /// for efficacy because stage two cannot change the verdict, so the
  /// expected size may fall below Simon's; rejection rates are identical.
  Design as_design() const {
    Design d;
    d.n1 = n1;
    d.n_max = n_total;
    for (int x1 = 0; x1 <= n1; ++x1) {
      if (x1 <= r1) {
        d.n.push_back(n1);
        d.c.push_back(CriticalValue::pos_inf());
      } else if (x1 > r) {
        d.n.push_back(n1);
        d.c.push_back(CriticalValue::neg_inf());
      } else {
        d.n.push_back(n_total);
        d.c.push_back(CriticalValue::finite(r));
      }
    }
    return d;
  }
};

class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kDefaultSimonCap = 150;

namespace detail {

struct SimonTables {
  // tail[m][t + 1] = P[Bin(m, p) > t]
  std::vector<std::vector<double>> tail0, tail1, pmf0, pmf1;

  SimonTables(const TrialParams& p, int cap) : tail0(cap + 1), tail1(cap + 1), pmf0(cap + 1), pmf1(cap + 1) {
    for (int m = 0; m <= cap; ++m) {
      tail0[m] = upper_tail_table({m, p.rho0});
      tail1[m] = upper_tail_table({m, p.rho1});
      pmf0[m] = pmf_table({m, p.rho0});
      pmf1[m] = pmf_table({m, p.rho1});
    }
  }

  static double tail(const std::vector<double>& t, int threshold) {
    const int m = static_cast<int>(t.size()) - 2;
    if (threshold < 0) return 1.0;
    if (threshold >= m) return 0.0;
    return t[threshold + 1];
  }

  double reject(bool null, int n1, int r1, int n, int r) const {
    const auto& w = null ? pmf0[n1] : pmf1[n1];
    const auto& t = null ? tail0[n - n1] : tail1[n - n1];
    double s = 0.0;
    for (int x1 = r1 + 1; x1 <= n1; ++x1) s += w[x1] * tail(t, r - x1);
    return s;
  }
};

/// Best futility boundary r for fixed (n1, r1, n): the smallest r keeping
/// the type one error at alpha, since power decreases in r.
inline std::optional<SimonDesign> best_for(const SimonTables& tab, const TrialParams& p, int n1, int r1, int n) {
  int lo = r1, hi = n - 1;
  if (tab.reject(true, n1, r1, n, hi) > p.alpha) return std::nullopt;
  while (lo < hi) {
    const int mid = (lo + hi) / 2;
    if (tab.reject(true, n1, r1, n, mid) <= p.alpha) hi = mid;
    else lo = mid + 1;
  }
  const double power = tab.reject(false, n1, r1, n, lo);
  if (power < 1.0 - p.beta) return std::nullopt;
  SimonDesign d;
  d.r1 = r1;
  d.n1 = n1;
  d.r = lo;
  d.n_total = n;
  double pet = 0.0;
  for (int x1 = 0; x1 <= r1; ++x1) pet += tab.pmf0[n1][x1];
  d.expected_n_null = n1 + (1.0 - pet) * (n - n1);
  d.type1 = tab.reject(true, n1, r1, n, lo);
  d.power = power;
  return d;
}

}  // namespace detail

/// Simon's optimal design: smallest expected size under rho0 among all
/// (r1/n1, r/n) with exact alpha and beta control, n <= n_cap. Ties go to
/// the smaller total, then the smaller n1.
inline SimonDesign simon_optimal(const TrialParams& params, int n_cap = kDefaultSimonCap) {
  params.validate();
  if (n_cap < 2) throw CapacityError("simon: capacity too small");
  detail::SimonTables tab(params, n_cap);
  std::optional<SimonDesign> best;
  for (int n = 2; n <= n_cap; ++n) {
    for (int n1 = 1; n1 < n; ++n1) {
      if (best && n1 > best->expected_n_null) break;
      for (int r1 = 0; r1 < n1; ++r1) {
        auto d = detail::best_for(tab, params, n1, r1, n);
        if (!d) continue;
        if (!best || d->expected_n_null < best->expected_n_null - 1e-12) best = d;
      }
    }
  }
  if (!best) throw CapacityError("simon: no feasible design with n <= " + std::to_string(n_cap));
  best->type = SimonDesign::Type::Optimal;
  return *best;
}

/// Simon's minimax design: smallest total size, ties broken by expected size.
inline SimonDesign simon_minimax(const TrialParams& params, int n_cap = kDefaultSimonCap) {
  params.validate();
  detail::SimonTables tab(params, n_cap);
  for (int n = 2; n <= n_cap; ++n) {
    std::optional<SimonDesign> best;
    for (int n1 = 1; n1 < n; ++n1)
      for (int r1 = 0; r1 < n1; ++r1) {
        auto d = detail::best_for(tab, params, n1, r1, n);
        if (d && (!best || d->expected_n_null < best->expected_n_null - 1e-12)) best = d;
      }
    if (best) {
      best->type = SimonDesign::Type::Minimax;
      return *best;
    }
  }
  throw CapacityError("simon: no feasible design with n <= " + std::to_string(n_cap));
}

enum class Rounding { Floor, Ceil };

/// Total sample size 10% above n_total, rounded to an integer.
inline int n_max_from_simon_total(int n_total, Rounding rounding = Rounding::Ceil) {
  return rounding == Rounding::Floor ? (11 * n_total) / 10 : (11 * n_total + 9) / 10;
}

inline int derive_n_max(const TrialParams& params, Rounding rounding = Rounding::Ceil,
                        int n_cap = kDefaultSimonCap) {
  return n_max_from_simon_total(simon_optimal(params, n_cap).n_total, rounding);
}

struct SearchSpace {
  // SimonPlus10Pct uses the optimal design's total, the minimax variant the minimax total.
  enum class NMaxRule { Explicit, SimonPlus10Pct, SimonMinimaxPlus10Pct };
  int n1_min = 5;
  int n1_max = -1;  // < 0: n_max - 5
  int n_max = -1;
  NMaxRule n_max_rule = NMaxRule::SimonPlus10Pct;
  Rounding rounding = Rounding::Ceil;

  static SearchSpace fixed(int n1, int n_max) { return {n1, n1, n_max, NMaxRule::Explicit}; }
  static SearchSpace explicit_range(int n1_min, int n1_max, int n_max) {
    return {n1_min, n1_max, n_max, NMaxRule::Explicit};
  }

  /// Resolves the derived fields.
  SearchSpace resolved(const TrialParams& params) const {
    SearchSpace s = *this;
    if (s.n_max_rule == NMaxRule::SimonPlus10Pct) s.n_max = derive_n_max(params, s.rounding);
    if (s.n_max_rule == NMaxRule::SimonMinimaxPlus10Pct)
      s.n_max = n_max_from_simon_total(simon_minimax(params).n_total, s.rounding);
    if (s.n_max < 1) throw std::invalid_argument("search space: n_max must be positive");
    if (s.n1_max < 0) s.n1_max = s.n_max - 5;
    if (s.n1_min < 1) throw std::invalid_argument("search space: n1_min must be >= 1");
    if (s.n1_max > s.n_max) throw std::invalid_argument("search space: n1_max exceeds n_max");
    if (s.n1_min > s.n1_max) throw std::invalid_argument("search space: empty n1 range");
    return s;
  }
};

struct StageOneOutcome {
  int n1 = 0;
  SolveStatus status = SolveStatus::Infeasible;
  double objective = std::numeric_limits<double>::infinity();
  long nodes = 0;
  double seconds = 0.0;
};

struct SearchResult {
  enum class Termination { Exhausted, N1ExceedsIncumbent };

  bool feasible = false;
  Design best;
  double objective = std::numeric_limits<double>::infinity();
  OperatingCharacteristics oc;
  AlphaReport alpha;
  SearchSpace space;
  std::vector<StageOneOutcome> per_n1;
  Termination terminated_by = Termination::Exhausted;
  long nodes = 0;
  double seconds = 0.0;
  bool limits_hit = false;
};

inline const char* to_string(SearchResult::Termination t) {
  return t == SearchResult::Termination::Exhausted ? "exhausted" : "n1_exceeds_incumbent";
}

struct SearchOptions {
  SolverOptions solver;
  double alpha_grid_step = kDefaultAlphaGridStep;
  BuildOptions build;
};

/// Smallest objective contribution any design with stage-one size n1 can have.
inline double objective_floor(int n1, int n_max, const ObjectiveSpec& obj) {
  return detail::size_cost(n1, n_max, obj);
}

/// Solves the conditional program for every n1 in ascending order. Each
/// subproblem only looks for designs beating the incumbent, and the loop
/// stops once no design with a larger n1 can.
inline SearchResult optimize(const TrialParams& params, const SearchSpace& space, const ConstraintFlags& flags,
                             const ObjectiveSpec& obj, const SearchOptions& opts = {}) {
  params.validate();
  obj.validate();
  const auto start = std::chrono::steady_clock::now();
  SearchResult result;
  result.space = space.resolved(params);
  const auto& sp = result.space;

  std::vector<std::uint8_t> best_assignment;
  BinaryLinearProgram best_blp;
  for (int n1 = sp.n1_min; n1 <= sp.n1_max; ++n1) {
    if (result.feasible && objective_floor(n1, sp.n_max, obj) > result.objective) {
      result.terminated_by = SearchResult::Termination::N1ExceedsIncumbent;
      break;
    }
    const auto t0 = std::chrono::steady_clock::now();
    auto cands = enumerate_candidates(n1, sp.n_max, params);
    auto blp = build_blp(cands, flags, obj, params, opts.build);
    SolverOptions so = opts.solver;
    if (result.feasible) so.objective_cutoff = result.objective;
    const auto sol = solve(blp, so);

    StageOneOutcome rec;
    rec.n1 = n1;
    rec.status = sol.status;
    rec.objective = sol.has_solution() ? sol.objective : std::numeric_limits<double>::infinity();
    rec.nodes = sol.nodes_explored;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.per_n1.push_back(rec);
    result.nodes += sol.nodes_explored;
    if (sol.status == SolveStatus::NodeLimit || sol.status == SolveStatus::TimeLimit) result.limits_hit = true;

    if (sol.has_solution() && (!result.feasible || sol.objective < result.objective - detail::kCompareTol)) {
      result.feasible = true;
      result.objective = sol.objective;
      best_assignment = sol.assignment;
      best_blp = std::move(blp);
    }
  }
  if (result.feasible) {
    result.best = decode_solution(best_assignment, best_blp);
    result.oc = operating_characteristics(result.best, params, opts.alpha_grid_step);
    result.alpha = verify_alpha_control(result.best, params.rho0, params.alpha, opts.alpha_grid_step);
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace twostage
