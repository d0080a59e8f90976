// SPDX-License-Identifier: Apache-2.0
//
// Two-stage design data model, conditional error/power and operating
// characteristics.

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "twostage/prob_kernel.hpp"

namespace twostage {

struct TrialParams {
  double rho0 = 0.2;
  double rho1 = 0.4;
  double alpha = 0.05;
  double beta = 0.2;

  void validate() const {
    auto open_unit = [](double v) { return v > 0.0 && v < 1.0; };
    if (!open_unit(rho0)) throw std::invalid_argument("rho0 must lie in (0,1)");
    if (!open_unit(rho1)) throw std::invalid_argument("rho1 must lie in (0,1)");
    if (!open_unit(alpha)) throw std::invalid_argument("alpha must lie in (0,1)");
    if (!open_unit(beta)) throw std::invalid_argument("beta must lie in (0,1)");
    if (!(rho0 < rho1)) throw std::invalid_argument("rho0 must be smaller than rho1");
  }
};

/// Total sample size n(x1) and critical value c(x1) for every stage-one
/// outcome x1 = 0..n1.
struct Design {
  int n1 = 0;
  int n_max = 0;
  std::vector<int> n;
  std::vector<CriticalValue> c;

  int stage_two_size(int x1) const { return n.at(x1) - n1; }
  int max_total() const { return n.empty() ? n1 : *std::max_element(n.begin(), n.end()); }

  bool operator==(const Design&) const = default;
};

struct Violation {
  int x1 = -1;
  std::string clause;
};

struct ValidityVerdict {
  bool valid = true;
  std::vector<Violation> violations;
};

class StructuralError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline ValidityVerdict validate(const Design& d) {
  if (d.n1 < 1) throw StructuralError("design: n1 must be positive");
  const auto len = static_cast<std::size_t>(d.n1) + 1;
  if (d.n.size() != len || d.c.size() != len)
    throw StructuralError("design: n and c must both have n1 + 1 entries");

  ValidityVerdict verdict;
  auto flag = [&](int x1, std::string clause) {
    verdict.valid = false;
    verdict.violations.push_back({x1, std::move(clause)});
  };
  if (d.n_max < d.n1) flag(-1, "n_max >= n1");
  for (int x1 = 0; x1 <= d.n1; ++x1) {
    const int nx = d.n[x1];
    const CriticalValue cx = d.c[x1];
    if (nx < d.n1 || nx > d.n_max) flag(x1, "n1 <= n(x1) <= n_max");
    if (cx.is_sentinel() != (nx == d.n1)) flag(x1, "c(x1) in {-inf,+inf} <=> n(x1) = n1");
    if (nx > d.n1 && cx.is_finite() && !(x1 <= cx.value() && cx.value() < nx))
      flag(x1, "n(x1) > n1 => x1 <= c(x1) < n(x1)");
  }
  return verdict;
}

inline void require_valid(const Design& d) {
  const auto verdict = validate(d);
  if (!verdict.valid) {
    const auto& v = verdict.violations.front();
    throw StructuralError("invalid design at x1=" + std::to_string(v.x1) + ": " + v.clause);
  }
}

/// P[X2 > c - x1] for X2 ~ Bin(n2, rho).
inline double conditional_rejection(int x1, int n2, CriticalValue c, double rho) {
  if (c.is_neg_inf()) return 1.0;
  if (c.is_pos_inf()) return 0.0;
  if (n2 <= 0) throw std::invalid_argument("finite critical value requires a second stage");
  return upper_tail(c.shifted_down(x1), BinomialSpec{n2, rho});
}

inline double conditional_error(int x1, int n2, CriticalValue c, double rho0) {
  return conditional_rejection(x1, n2, c, rho0);
}

inline double conditional_power(int x1, int n2, CriticalValue c, double rho1) {
  return conditional_rejection(x1, n2, c, rho1);
}

/// P_rho[X1 = x1], x1 = 0..n1.
inline std::vector<double> stage_one_weights(int n1, double rho) {
  return pmf_table(BinomialSpec{n1, rho});
}

/// Discrete prior over the response probability: support points and masses.
struct DiscretePrior {
  std::vector<double> support;
  std::vector<double> mass;

  void validate() const {
    if (support.empty() || support.size() != mass.size())
      throw std::invalid_argument("prior: support and mass must be non-empty and of equal length");
    double total = 0.0;
    for (std::size_t i = 0; i < support.size(); ++i) {
      if (!(support[i] >= 0.0 && support[i] <= 1.0))
        throw std::invalid_argument("prior: support points must lie in [0,1]");
      if (!(mass[i] >= 0.0)) throw std::invalid_argument("prior: masses must be non-negative");
      total += mass[i];
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("prior: masses must sum to 1");
  }
};

/// Prior-predictive distribution of X1: w(x1) = sum_j mass_j * pmf(x1; n1, support_j).
inline std::vector<double> prior_weights(int n1, const DiscretePrior& prior) {
  prior.validate();
  std::vector<double> w(static_cast<std::size_t>(n1) + 1, 0.0);
  for (std::size_t j = 0; j < prior.support.size(); ++j) {
    const auto p = stage_one_weights(n1, prior.support[j]);
    for (std::size_t k = 0; k < w.size(); ++k) w[k] += prior.mass[j] * p[k];
  }
  return w;
}

inline double expected_sample_size(const Design& d, std::span<const double> weights) {
  if (weights.size() != d.n.size())
    throw StructuralError("expected_sample_size: one weight per stage-one outcome required");
  double total = 0.0;
  double mass = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] < 0.0) throw std::domain_error("expected_sample_size: negative weight");
    total += weights[k] * d.n[k];
    mass += weights[k];
  }
  if (std::abs(mass - 1.0) > 1e-9) throw std::domain_error("expected_sample_size: weights must sum to 1");
  return total;
}

inline double expected_sample_size(const Design& d, double rho) {
  return expected_sample_size(d, stage_one_weights(d.n1, rho));
}

/// Overall probability of rejecting H0 when the response probability is rho.
inline double rejection_probability(const Design& d, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::domain_error("rejection_probability: rho outside [0,1]");
  require_valid(d);
  const auto w = stage_one_weights(d.n1, rho);
  double total = 0.0;
  for (int x1 = 0; x1 <= d.n1; ++x1) {
    if (w[x1] == 0.0) continue;
    total += w[x1] * conditional_rejection(x1, d.stage_two_size(x1), d.c[x1], rho);
  }
  return std::clamp(total, 0.0, 1.0);
}

struct AlphaReport {
  double max_type1 = 0.0;
  double argmax_rho = 0.0;
  double grid_step = 0.0;
  bool pass = true;
};

inline constexpr double kDefaultAlphaGridStep = 5e-4;
inline constexpr double kAlphaPassTolerance = 1e-6;

/// Type one error rate over the grid {0, h, 2h, ...} up to rho0, plus rho0
/// itself. Ties resolve to the smallest rho.
inline AlphaReport verify_alpha_control(const Design& d, double rho0, double alpha,
                                        double grid_step = kDefaultAlphaGridStep) {
  if (!(grid_step > 0.0 && grid_step <= rho0))
    throw std::invalid_argument("verify_alpha_control: grid step must lie in (0, rho0]");
  require_valid(d);
  AlphaReport report;
  report.grid_step = grid_step;
  report.max_type1 = -1.0;
  auto visit = [&](double rho) {
    const double r = rejection_probability(d, rho);
    if (r > report.max_type1) {
      report.max_type1 = r;
      report.argmax_rho = rho;
    }
  };
  for (long i = 0;; ++i) {
    const double rho = static_cast<double>(i) * grid_step;
    if (rho >= rho0) break;
    visit(rho);
  }
  visit(rho0);
  report.pass = report.max_type1 <= alpha + kAlphaPassTolerance;
  return report;
}

struct OutcomeRow {
  int x1 = 0;
  double weight0 = 0.0;
  int n = 0;
  CriticalValue c;
  double ce = 0.0;
  double cp = 0.0;
};

struct OperatingCharacteristics {
  double expected_n_null = 0.0;
  double power_at_rho1 = 0.0;
  double max_type1 = 0.0;
  double argmax_rho = 0.0;
  std::vector<OutcomeRow> per_outcome;
};

inline OperatingCharacteristics operating_characteristics(const Design& d, const TrialParams& params,
                                                          double grid_step = kDefaultAlphaGridStep) {
  params.validate();
  require_valid(d);
  OperatingCharacteristics oc;
  const auto w0 = stage_one_weights(d.n1, params.rho0);
  oc.expected_n_null = expected_sample_size(d, w0);
  oc.power_at_rho1 = rejection_probability(d, params.rho1);
  const auto alpha = verify_alpha_control(d, params.rho0, params.alpha, grid_step);
  oc.max_type1 = alpha.max_type1;
  oc.argmax_rho = alpha.argmax_rho;
  oc.per_outcome.reserve(w0.size());
  for (int x1 = 0; x1 <= d.n1; ++x1) {
    const int n2 = d.stage_two_size(x1);
    oc.per_outcome.push_back({x1, w0[x1], d.n[x1], d.c[x1],
                              conditional_error(x1, n2, d.c[x1], params.rho0),
                              conditional_power(x1, n2, d.c[x1], params.rho1)});
  }
  return oc;
}

/// Futility stops form a prefix 0..a and efficacy stops a suffix b..n1.
inline bool has_contiguous_stopping(const Design& d) {
  bool seen_non_futility = false;
  for (int x1 = 0; x1 <= d.n1; ++x1) {
    if (d.c[x1].is_pos_inf() && d.n[x1] == d.n1) {
      if (seen_non_futility) return false;
    } else {
      seen_non_futility = true;
    }
  }
  bool seen_non_efficacy = false;
  for (int x1 = d.n1; x1 >= 0; --x1) {
    if (d.c[x1].is_neg_inf() && d.n[x1] == d.n1) {
      if (seen_non_efficacy) return false;
    } else {
      seen_non_efficacy = true;
    }
  }
  return true;
}

/// n(.) is non-decreasing then non-increasing.
inline bool has_unimodal_sample_size(const Design& d) {
  bool descending = false;
  for (std::size_t k = 1; k < d.n.size(); ++k) {
    const int diff = d.n[k] - d.n[k - 1];
    if (diff < 0) descending = true;
    if (diff > 0 && descending) return false;
  }
  return true;
}

}  // namespace twostage
