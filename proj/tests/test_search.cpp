#include <catch_amalgamated.hpp>

#include "support.hpp"
#include "twostage/search.hpp"

using namespace twostage;
using Catch::Matchers::WithinAbs;

TEST_CASE("Simon optimal designs") {
  const auto s02 = simon_optimal({0.2, 0.4, 0.05, 0.2});
  CHECK_THAT(s02.expected_n_null, WithinAbs(20.6, 0.05));
  CHECK(s02.r1 == 3);
  CHECK(s02.n1 == 13);
  CHECK(s02.r == 12);
  CHECK(s02.n_total == 43);
  CHECK_THAT(simon_optimal({0.7, 0.9, 0.05, 0.2}).expected_n_null, WithinAbs(14.8, 0.05));
  CHECK_THAT(simon_optimal({0.1, 0.3, 0.05, 0.2}).expected_n_null, WithinAbs(15.0, 0.05));

  for (double rho0 : {0.1, 0.3, 0.5}) {
    const TrialParams p{rho0, rho0 + 0.2, 0.05, 0.2};
    const auto s = simon_optimal(p);
    INFO("rho0 " << rho0);
    CHECK(s.r1 < s.n1);
    CHECK(s.n1 <= s.n_total);
    CHECK(s.r1 <= s.r);
    CHECK(s.r < s.n_total);
    // cross-check the stored characteristics through design-core
    const auto d = s.as_design();
    REQUIRE(validate(d).valid);
    CHECK_THAT(rejection_probability(d, p.rho0), WithinAbs(s.type1, 1e-12));
    CHECK_THAT(rejection_probability(d, p.rho1), WithinAbs(s.power, 1e-12));
    CHECK(expected_sample_size(d, p.rho0) <= s.expected_n_null + 1e-12);
    CHECK(s.type1 <= p.alpha);
    CHECK(s.power >= 1.0 - p.beta);
  }
}

TEST_CASE("Simon minimax design") {
  const TrialParams p{0.2, 0.4, 0.05, 0.2};
  const auto mm = simon_minimax(p);
  const auto opt = simon_optimal(p);
  CHECK(mm.type == SimonDesign::Type::Minimax);
  CHECK(mm.n_total <= opt.n_total);
  CHECK(mm.expected_n_null >= opt.expected_n_null);
  CHECK(mm.n_total == 33);
}

TEST_CASE("Simon capacity") {
  CHECK_THROWS_AS(simon_optimal({0.2, 0.4, 0.05, 0.2}, 20), CapacityError);
  CHECK_THROWS_AS(simon_minimax({0.2, 0.25, 0.05, 0.2}, 30), CapacityError);
}

TEST_CASE("n_max from the Simon total") {
  CHECK(n_max_from_simon_total(40, Rounding::Floor) == 44);
  CHECK(n_max_from_simon_total(40, Rounding::Ceil) == 44);
  CHECK(n_max_from_simon_total(43, Rounding::Floor) == 47);
  CHECK(n_max_from_simon_total(43, Rounding::Ceil) == 48);
  CHECK(n_max_from_simon_total(10, Rounding::Floor) == 11);
  CHECK(n_max_from_simon_total(10, Rounding::Ceil) == 11);
  CHECK(derive_n_max({0.2, 0.4, 0.05, 0.2}, Rounding::Floor) == 47);
  CHECK(derive_n_max({0.2, 0.4, 0.05, 0.2}) == 48);
}

TEST_CASE("search space resolution") {
  const TrialParams p{0.2, 0.4, 0.05, 0.2};
  const auto rule = SearchSpace{}.resolved(p);
  CHECK(rule.n_max == 48);
  CHECK(rule.n1_min == 5);
  CHECK(rule.n1_max == 43);
  const auto fx = SearchSpace::fixed(10, 40).resolved(p);
  CHECK(fx.n1_min == 10);
  CHECK(fx.n1_max == 10);
  CHECK_THROWS_AS(SearchSpace::explicit_range(0, 5, 10).resolved(p), std::invalid_argument);
  CHECK_THROWS_AS(SearchSpace::explicit_range(5, 11, 10).resolved(p), std::invalid_argument);
  CHECK_THROWS_AS(SearchSpace::explicit_range(8, 6, 10).resolved(p), std::invalid_argument);
  CHECK_THROWS_AS(SearchSpace::explicit_range(1, 1, 0).resolved(p), std::invalid_argument);
}

TEST_CASE("worked example at a fixed stage-one size") {
  const TrialParams p = ref::example_params();
  const auto obj = ObjectiveSpec::expected_n();
  const auto space = SearchSpace::fixed(10, 40);

  const auto opt = optimize(p, space, ConstraintFlags::optimal(), obj);
  REQUIRE(opt.feasible);
  CHECK_THAT(opt.objective, WithinAbs(21.241, 5e-4));
  CHECK(opt.alpha.pass);
  CHECK_THAT(opt.oc.expected_n_null, WithinAbs(opt.objective, 1e-9));

  const auto ek = optimize(p, space, ConstraintFlags::ek(), obj);
  REQUIRE(ek.feasible);
  CHECK_THAT(ek.objective, WithinAbs(21.250, 5e-4));
  CHECK(has_contiguous_stopping(ek.best));

  const auto nice = optimize(p, space, ConstraintFlags::nice(), obj);
  REQUIRE(nice.feasible);
  CHECK_THAT(nice.objective, WithinAbs(21.252, 5e-4));
  CHECK(has_contiguous_stopping(nice.best));
  CHECK(has_unimodal_sample_size(nice.best));

  CHECK(opt.objective <= ek.objective + 1e-9);
  CHECK(opt.objective <= nice.objective + 1e-9);
}

TEST_CASE("search stops once n1 exceeds the incumbent") {
  const TrialParams p = ref::example_params();
  const auto res = optimize(p, SearchSpace::explicit_range(5, 35, 40), ConstraintFlags::optimal(),
                            ObjectiveSpec::expected_n());
  REQUIRE(res.feasible);
  CHECK(res.terminated_by == SearchResult::Termination::N1ExceedsIncumbent);
  CHECK(res.objective <= 21.241 + 5e-4);
  for (const auto& s : res.per_n1) CHECK(s.n1 <= res.objective);
  CHECK(res.per_n1.back().n1 < 22);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : res.per_n1) best = std::min(best, s.objective);
  CHECK_THAT(res.objective, WithinAbs(best, 1e-12));
}

TEST_CASE("early termination never loses the optimum") {
  const TrialParams p{0.2, 0.5, 0.1, 0.2};
  const int n_max = 12;
  double full = std::numeric_limits<double>::infinity();
  for (int n1 = 1; n1 <= n_max; ++n1) {
    const auto blp = build_blp(enumerate_candidates(n1, n_max, p), ConstraintFlags::optimal(),
                               ObjectiveSpec::expected_n(), p);
    const auto sol = solve(blp);
    if (sol.has_solution()) full = std::min(full, sol.objective);
  }
  const auto res = optimize(p, SearchSpace::explicit_range(1, n_max, n_max), ConstraintFlags::optimal(),
                            ObjectiveSpec::expected_n());
  REQUIRE(res.feasible);
  CHECK_THAT(res.objective, WithinAbs(full, 1e-9));
}

TEST_CASE("no feasible stage-one size") {
  const TrialParams p{0.3, 0.35, 0.01, 0.01};
  const auto res = optimize(p, SearchSpace::explicit_range(2, 4, 6), ConstraintFlags::optimal(),
                            ObjectiveSpec::expected_n());
  CHECK_FALSE(res.feasible);
  REQUIRE(res.per_n1.size() == 3);
  for (const auto& s : res.per_n1) CHECK(s.status == SolveStatus::Infeasible);
  CHECK(res.terminated_by == SearchResult::Termination::Exhausted);
}

TEST_CASE("exp-scaled objective favours smaller maxima") {
  const TrialParams p = ref::example_params();
  const auto space = SearchSpace::fixed(10, 40);
  const auto lin = optimize(p, space, ConstraintFlags::optimal(), ObjectiveSpec::expected_n());
  const auto ex = optimize(p, space, ConstraintFlags::optimal(), ObjectiveSpec::expected_exp_n());
  REQUIRE(lin.feasible);
  REQUIRE(ex.feasible);
  CHECK(ex.best.max_total() <= lin.best.max_total());
  CHECK(expected_sample_size(ex.best, 0.2) >= lin.objective - 1e-9);
  CHECK(ex.alpha.pass);
}
