// SPDX-License-Identifier: Apache-2.0
//
// Binomial probabilities for the stage-one and stage-two response counts.

#pragma once

#include <cmath>
#include <compare>
#include <stdexcept>
#include <string>
#include <vector>

namespace twostage {

struct BinomialSpec {
  int trials = 0;
  double success_prob = 0.0;

  void validate() const {
    if (trials < 0) throw std::domain_error("binomial trials must be >= 0");
    if (!(success_prob >= 0.0 && success_prob <= 1.0))
      throw std::domain_error("binomial success probability must lie in [0,1]");
  }
};

/// Critical value of the final test: reject iff the total response count
/// exceeds it. The two sentinels encode stopping after stage one
/// (NEG_INF: always reject, POS_INF: never reject).
class CriticalValue {
 public:
  enum class Kind : int { NegInf = 0, Finite = 1, PosInf = 2 };

  constexpr CriticalValue() = default;

  static constexpr CriticalValue neg_inf() { return CriticalValue(Kind::NegInf, 0); }
  static constexpr CriticalValue pos_inf() { return CriticalValue(Kind::PosInf, 0); }
  static constexpr CriticalValue finite(int v) { return CriticalValue(Kind::Finite, v); }

  constexpr Kind kind() const { return kind_; }
  constexpr bool is_finite() const { return kind_ == Kind::Finite; }
  constexpr bool is_neg_inf() const { return kind_ == Kind::NegInf; }
  constexpr bool is_pos_inf() const { return kind_ == Kind::PosInf; }
  constexpr bool is_sentinel() const { return kind_ != Kind::Finite; }

  int value() const {
    if (!is_finite()) throw std::logic_error("critical value is a sentinel");
    return value_;
  }

  /// c - shift; sentinels are absorbing.
  constexpr CriticalValue shifted_down(int shift) const {
    return is_finite() ? finite(value_ - shift) : *this;
  }

  // NEG_INF < finite values (numeric order) < POS_INF
  constexpr auto operator<=>(const CriticalValue& o) const {
    if (kind_ != o.kind_) return static_cast<int>(kind_) <=> static_cast<int>(o.kind_);
    return value_ <=> o.value_;
  }
  constexpr bool operator==(const CriticalValue& o) const {
    return kind_ == o.kind_ && value_ == o.value_;
  }

  std::string to_string() const {
    switch (kind_) {
      case Kind::NegInf: return "-inf";
      case Kind::PosInf: return "+inf";
      default: return std::to_string(value_);
    }
  }

  /// Accepts "-inf", "+inf", "inf" and decimal integers.
  static CriticalValue parse(const std::string& token) {
    if (token == "-inf" || token == "-Inf") return neg_inf();
    if (token == "+inf" || token == "inf" || token == "Inf" || token == "+Inf") return pos_inf();
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(token, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("invalid critical value token '" + token + "'");
    }
    if (used != token.size())
      throw std::invalid_argument("invalid critical value token '" + token + "'");
    return finite(v);
  }

 private:
  constexpr CriticalValue(Kind k, int v) : kind_(k), value_(v) {}

  Kind kind_ = Kind::PosInf;
  int value_ = 0;
};

namespace detail {

inline double log_binomial_pmf(int k, int n, double p) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
         k * std::log(p) + (n - k) * std::log1p(-p);
}

}  // namespace detail

/// All pmf values P[X = k], k = 0..trials.
///
/// Anchored at the mode and filled outward with the multiplicative
/// recurrence, so no term underflows before it is genuinely negligible.
/// Above 1000 trials every term is evaluated through log-gamma instead.
inline std::vector<double> pmf_table(const BinomialSpec& spec) {
  spec.validate();
  const int n = spec.trials;
  const double p = spec.success_prob;
  std::vector<double> out(static_cast<std::size_t>(n) + 1, 0.0);
  if (p == 0.0) {
    out.front() = 1.0;
    return out;
  }
  if (p == 1.0) {
    out.back() = 1.0;
    return out;
  }
  if (n > 1000) {
    for (int k = 0; k <= n; ++k) out[k] = std::exp(detail::log_binomial_pmf(k, n, p));
    return out;
  }
  int mode = static_cast<int>(std::floor((n + 1) * p));
  if (mode > n) mode = n;
  out[mode] = std::exp(detail::log_binomial_pmf(mode, n, p));
  const double odds = p / (1.0 - p);
  for (int k = mode; k < n; ++k)
    out[k + 1] = out[k] * (static_cast<double>(n - k) / (k + 1)) * odds;
  for (int k = mode; k > 0; --k)
    out[k - 1] = out[k] * (static_cast<double>(k) / (n - k + 1)) / odds;
  return out;
}

inline double pmf(int k, const BinomialSpec& spec) {
  spec.validate();
  if (k < 0 || k > spec.trials)
    throw std::domain_error("pmf: k=" + std::to_string(k) + " outside [0, " +
                            std::to_string(spec.trials) + "]");
  return pmf_table(spec)[static_cast<std::size_t>(k)];
}

/// P[X > c] given a precomputed pmf table. Sums whichever tail is shorter.
inline double upper_tail_from_table(int c, const std::vector<double>& table) {
  const int n = static_cast<int>(table.size()) - 1;
  if (c < 0) return 1.0;
  if (c >= n) return 0.0;
  const int upper_terms = n - c;
  if (upper_terms <= c + 1) {
    double s = 0.0;
    for (int k = n; k > c; --k) s += table[k];
    return s;
  }
  double s = 0.0;
  for (int k = 0; k <= c; ++k) s += table[k];
  return std::max(0.0, 1.0 - s);
}

inline double upper_tail(CriticalValue c, const BinomialSpec& spec) {
  spec.validate();
  if (c.is_neg_inf()) return 1.0;
  if (c.is_pos_inf()) return 0.0;
  const int v = c.value();
  if (v < 0) return 1.0;
  if (v >= spec.trials) return 0.0;
  return upper_tail_from_table(v, pmf_table(spec));
}

/// tails[t + 1] = P[X > t] for t = -1..trials, i.e. a table of length trials + 2.
inline std::vector<double> upper_tail_table(const BinomialSpec& spec) {
  const auto table = pmf_table(spec);
  const int n = spec.trials;
  std::vector<double> tails(static_cast<std::size_t>(n) + 2, 0.0);
  for (int t = -1; t <= n; ++t) tails[t + 1] = upper_tail_from_table(t, table);
  return tails;
}

}  // namespace twostage
