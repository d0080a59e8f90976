#include <catch_amalgamated.hpp>

#include "support.hpp"
#include "twostage/design.hpp"

using namespace twostage;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Design single_stage(int n1, CriticalValue c) {
  Design d{n1, n1, std::vector<int>(n1 + 1, n1), std::vector<CriticalValue>(n1 + 1, c)};
  return d;
}

// Double sum over (x1, x2) with exact binomial terms.
double rejection_by_enumeration(const Design& d, int num, int den) {
  double total = 0.0;
  for (int x1 = 0; x1 <= d.n1; ++x1) {
    const double w = oracle::pmf(x1, d.n1, num, den);
    const auto c = d.c[x1];
    if (c.is_neg_inf()) total += w;
    if (!c.is_finite()) continue;
    const int n2 = d.n[x1] - d.n1;
    for (int x2 = 0; x2 <= n2; ++x2)
      if (x1 + x2 > c.value()) total += w * oracle::pmf(x2, n2, num, den);
  }
  return total;
}

}  // namespace

TEST_CASE("validity") {
  CHECK(validate(single_stage(6, ref::kFut)).valid);
  CHECK(validate(ref::example_optimal()).valid);
  CHECK(validate(ref::example_ek()).valid);
  CHECK(validate(ref::example_nice()).valid);

  auto d = ref::example_optimal();
  d.n[4] = 20;
  d.c[4] = ref::kFut;
  const auto v = validate(d);
  CHECK_FALSE(v.valid);
  REQUIRE_FALSE(v.violations.empty());
  CHECK(v.violations.front().x1 == 4);

  d = ref::example_optimal();
  d.c[3] = ref::F(2);  // below x1
  CHECK_FALSE(validate(d).valid);
  d.c[3] = ref::F(38);  // not below n(x1)
  CHECK_FALSE(validate(d).valid);
  d = ref::example_optimal();
  d.n[4] = 41;
  CHECK_FALSE(validate(d).valid);
  d = ref::example_optimal();
  d.c[0] = ref::F(5);  // finite with no second stage
  CHECK_FALSE(validate(d).valid);

  d = ref::example_optimal();
  d.n.pop_back();
  CHECK_THROWS_AS(validate(d), StructuralError);
  CHECK_THROWS_AS(require_valid(Design{}), StructuralError);
}

TEST_CASE("conditional error and power") {
  for (int x1 : {0, 3, 9}) {
    CHECK(conditional_error(x1, 0, ref::kFut, 0.2) == 0.0);
    CHECK(conditional_error(x1, 0, ref::kEff, 0.2) == 1.0);
    CHECK(conditional_power(x1, 0, ref::kEff, 0.4) == 1.0);
    CHECK(conditional_power(x1, 0, ref::kFut, 0.4) == 0.0);
  }
  CHECK_THAT(conditional_error(2, 7, ref::F(5), 0.2), WithinRel(oracle::tail(3, 7, 2, 10), 1e-13));
  CHECK_THAT(conditional_power(2, 7, ref::F(5), 0.4), WithinRel(oracle::tail(3, 7, 4, 10), 1e-13));
  CHECK_THROWS(conditional_error(2, 0, ref::F(5), 0.2));
}

TEST_CASE("expected sample size") {
  const auto d = single_stage(8, ref::kEff);
  CHECK_THAT(expected_sample_size(d, 0.3), WithinAbs(8.0, 1e-12));
  const std::vector<double> w{0.1, 0.2, 0.3, 0.1, 0.1, 0.05, 0.05, 0.05, 0.05};
  CHECK_THAT(expected_sample_size(d, w), WithinAbs(8.0, 1e-12));

  CHECK_THAT(expected_sample_size(ref::example_optimal(), 0.2), WithinAbs(21.241, 5e-4));
  CHECK_THAT(expected_sample_size(ref::example_ek(), 0.2), WithinAbs(21.250, 5e-4));
  CHECK_THAT(expected_sample_size(ref::example_nice(), 0.2), WithinAbs(21.252, 5e-4));

  CHECK_THROWS_AS(expected_sample_size(d, std::vector<double>{1.0}), StructuralError);
  std::vector<double> bad(9, 0.1);
  CHECK_THROWS_AS(expected_sample_size(d, bad), std::domain_error);
}

TEST_CASE("prior-predictive weights") {
  DiscretePrior point{{0.3}, {1.0}};
  const auto w = prior_weights(6, point);
  const auto b = stage_one_weights(6, 0.3);
  for (std::size_t k = 0; k < w.size(); ++k) CHECK_THAT(w[k], WithinAbs(b[k], 1e-15));

  DiscretePrior mix{{0.2, 0.4}, {0.5, 0.5}};
  const auto wm = prior_weights(4, mix);
  for (int k = 0; k <= 4; ++k)
    CHECK_THAT(wm[k], WithinAbs(0.5 * oracle::pmf(k, 4, 2, 10) + 0.5 * oracle::pmf(k, 4, 4, 10), 1e-13));
  CHECK_THROWS_AS(prior_weights(4, DiscretePrior{{0.2}, {0.7}}), std::invalid_argument);
  CHECK_THROWS_AS(prior_weights(4, DiscretePrior{{1.2}, {1.0}}), std::invalid_argument);
}

TEST_CASE("rejection probability") {
  CHECK(rejection_probability(single_stage(5, ref::kFut), 0.7) == 0.0);
  CHECK_THAT(rejection_probability(single_stage(5, ref::kEff), 0.1), WithinAbs(1.0, 1e-12));
  const auto opt = ref::example_optimal();
  CHECK(rejection_probability(opt, 0.4) >= 0.8);
  CHECK(rejection_probability(opt, 0.2) <= 0.05);
  for (const auto& d : {ref::example_optimal(), ref::example_ek(), ref::example_nice()})
    for (int num : {0, 1, 2, 3, 4, 7, 10}) {
      INFO("rho=" << num / 10.0);
      CHECK_THAT(rejection_probability(d, num / 10.0), WithinAbs(rejection_by_enumeration(d, num, 10), 1e-14));
    }
  CHECK_THROWS_AS(rejection_probability(opt, 1.5), std::domain_error);
}

TEST_CASE("alpha control over the null region") {
  const auto fut = verify_alpha_control(single_stage(5, ref::kFut), 0.2, 0.05);
  CHECK(fut.max_type1 == 0.0);
  CHECK(fut.argmax_rho == 0.0);
  CHECK(fut.pass);

  const auto opt = verify_alpha_control(ref::example_optimal(), 0.2, 0.05);
  CHECK(opt.pass);
  CHECK(opt.grid_step == kDefaultAlphaGridStep);
  CHECK(opt.max_type1 <= 0.05 + 1e-6);
  CHECK(opt.argmax_rho == 0.2);  // rejection grows with rho for this design
  CHECK(verify_alpha_control(ref::example_ek(), 0.2, 0.05).pass);

  // rejecting whenever x1 >= 1 breaks the level
  Design loose = single_stage(4, ref::kEff);
  loose.c[0] = ref::kFut;
  const auto bad = verify_alpha_control(loose, 0.2, 0.05);
  CHECK_FALSE(bad.pass);
  CHECK_THAT(bad.max_type1, WithinAbs(1.0 - oracle::pmf(0, 4, 2, 10), 1e-14));

  CHECK_THROWS_AS(verify_alpha_control(loose, 0.2, 0.05, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(verify_alpha_control(loose, 0.2, 0.05, 0.3), std::invalid_argument);
}

TEST_CASE("operating characteristics") {
  const TrialParams p = ref::example_params();
  const auto oc0 = operating_characteristics(single_stage(7, ref::kFut), p);
  CHECK_THAT(oc0.expected_n_null, WithinAbs(7.0, 1e-12));
  CHECK(oc0.power_at_rho1 == 0.0);
  CHECK(oc0.max_type1 == 0.0);

  const auto ek = operating_characteristics(ref::example_ek(), p);
  CHECK_THAT(ek.expected_n_null, WithinAbs(21.250, 5e-4));
  CHECK(ek.power_at_rho1 >= 0.8);
  REQUIRE(ek.per_outcome.size() == 11);

  const auto opt = operating_characteristics(ref::example_optimal(), p);
  CHECK(opt.per_outcome[7].ce == 1.0);
  CHECK(opt.per_outcome[8].ce < 1.0);
  for (const auto& r : opt.per_outcome) {
    CHECK_THAT(r.weight0, WithinRel(oracle::pmf(r.x1, 10, 2, 10), 1e-12));
    if (r.c.is_finite()) {
      CHECK_THAT(r.ce, WithinAbs(oracle::tail(r.c.value() - r.x1, r.n - 10, 2, 10), 1e-13));
      CHECK_THAT(r.cp, WithinAbs(oracle::tail(r.c.value() - r.x1, r.n - 10, 4, 10), 1e-13));
    }
  }
}

TEST_CASE("shape predicates") {
  CHECK(has_contiguous_stopping(ref::example_ek()));
  CHECK(has_contiguous_stopping(ref::example_nice()));
  CHECK_FALSE(has_contiguous_stopping(ref::example_optimal()));
  CHECK(has_unimodal_sample_size(ref::example_nice()));
  CHECK_FALSE(has_unimodal_sample_size(ref::example_ek()));
  CHECK(has_unimodal_sample_size(single_stage(3, ref::kFut)));

  Design gap = single_stage(4, ref::kFut);
  gap.c[2] = ref::kEff;  // efficacy stop inside the futility prefix
  CHECK_FALSE(has_contiguous_stopping(gap));
}
