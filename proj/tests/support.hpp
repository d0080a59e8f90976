// Shared oracles and reference designs for the unit tests.
#pragma once

#include <cstdint>
#include <vector>

#include "twostage/design.hpp"

namespace oracle {

using i128 = __int128;

inline i128 ipow(i128 b, int e) {
  i128 r = 1;
  while (e-- > 0) r *= b;
  return r;
}

inline i128 choose(int n, int k) {
  i128 r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Exact P[Bin(n, num/den) = k] as integer numerator over den^n.
inline i128 pmf_numerator(int k, int n, int num, int den) {
  return choose(n, k) * ipow(num, k) * ipow(den - num, n - k);
}

inline double pmf(int k, int n, int num, int den) {
  return static_cast<double>(static_cast<long double>(pmf_numerator(k, n, num, den)) /
                             static_cast<long double>(ipow(den, n)));
}

// P[Bin(n, num/den) > c], summed exactly before the single division.
inline double tail(int c, int n, int num, int den) {
  i128 s = 0;
  for (int k = c + 1; k <= n; ++k)
    if (k >= 0) s += pmf_numerator(k, n, num, den);
  return static_cast<double>(static_cast<long double>(s) / static_cast<long double>(ipow(den, n)));
}

}  // namespace oracle

namespace ref {

using twostage::CriticalValue;
using twostage::Design;

inline CriticalValue F(int v) { return CriticalValue::finite(v); }
inline const CriticalValue kFut = CriticalValue::pos_inf();
inline const CriticalValue kEff = CriticalValue::neg_inf();

// rho0 = 0.2, rho1 = 0.4, alpha = 0.05, beta = 0.2, n1 = 10, n_max = 40
inline Design example_optimal() {
  return {10, 40, {10, 10, 17, 38, 40, 36, 39, 10, 27, 10, 10},
          {kFut, kFut, F(5), F(11), F(12), F(11), F(11), kEff, F(10), kEff, kEff}};
}
inline Design example_ek() {
  return {10, 40, {10, 10, 17, 38, 40, 36, 39, 22, 10, 10, 10},
          {kFut, kFut, F(5), F(11), F(12), F(11), F(11), F(7), kEff, kEff, kEff}};
}
inline Design example_nice() {
  return {10, 40, {10, 10, 17, 38, 40, 37, 35, 19, 10, 10, 10},
          {kFut, kFut, F(5), F(11), F(12), F(11), F(11), F(7), kEff, kEff, kEff}};
}

inline twostage::TrialParams example_params() { return {0.2, 0.4, 0.05, 0.2}; }

}  // namespace ref
