#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "support.hpp"
#include "twostage/report.hpp"

using namespace twostage;
using namespace twostage::report;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace fs = std::filesystem;

namespace {

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    out.push_back(f);
  }
  return out;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("twostage_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("number formatting") {
  CHECK(fixed(21.2412, 5) == "21.24120");
  CHECK(fixed(14.65106534, 5) == "14.65107");
  for (double v : {0.1, 1.0 / 3.0, 0.04999999999999, 1e-300, 123456.789})
    CHECK(std::strtod(exact(v).c_str(), nullptr) == v);
}

TEST_CASE("design csv round trip") {
  for (const auto& d : {ref::example_optimal(), ref::example_ek(), ref::example_nice()}) {
    const auto text = design_csv(d);
    CHECK_THAT(text, ContainsSubstring("x1,n,c"));
    CHECK(parse_design_csv(text) == d);
  }
  const auto text = design_csv(ref::example_optimal());
  CHECK_THAT(text, ContainsSubstring("7,10,-inf"));
  CHECK_THAT(text, ContainsSubstring("0,10,+inf"));

  // without the header comment n_max falls back to the largest size
  const auto d = parse_design_csv("x1,n,c\n0,2,+inf\n1,5,2\n2,2,-inf\n");
  CHECK(d.n1 == 2);
  CHECK(d.n_max == 5);
  CHECK(d.c[1] == CriticalValue::finite(2));
}

TEST_CASE("design csv rejects malformed input") {
  CHECK_THROWS_AS(parse_design_csv(""), StructuralError);
  CHECK_THROWS_AS(parse_design_csv("x,n,c\n0,3,+inf\n"), StructuralError);
  CHECK_THROWS_AS(parse_design_csv("x1,n,c\n0,3\n"), StructuralError);
  CHECK_THROWS_AS(parse_design_csv("x1,n,c\n1,3,+inf\n"), StructuralError);
  CHECK_THROWS_AS(parse_design_csv("x1,n,c\n0,3,abc\n1,3,+inf\n"), StructuralError);
  CHECK_THROWS_AS(parse_design_csv("x1,n,c\n0,3,+inf\n1,5,+inf\n2,3,-inf\n"), StructuralError);
}

TEST_CASE("oc csv carries full precision") {
  const auto p = ref::example_params();
  const auto d = ref::example_optimal();
  const auto oc = operating_characteristics(d, p);
  const auto rows = csv_rows(oc_csv(oc));
  REQUIRE(rows.size() == 12);
  CHECK(rows[0] == std::vector<std::string>{"x1", "weight0", "n", "c", "ce", "cp"});
  for (int x1 = 0; x1 <= 10; ++x1) {
    const auto& r = rows[x1 + 1];
    const int n2 = d.n[x1] - d.n1;
    CHECK(std::stoi(r[0]) == x1);
    CHECK(std::stoi(r[2]) == d.n[x1]);
    CHECK(CriticalValue::parse(r[3]) == d.c[x1]);
    CHECK_THAT(std::stod(r[4]), WithinAbs(conditional_error(x1, n2, d.c[x1], p.rho0), 1e-12));
    CHECK_THAT(std::stod(r[5]), WithinAbs(conditional_power(x1, n2, d.c[x1], p.rho1), 1e-12));
    CHECK_THAT(std::stod(r[1]), WithinAbs(oracle::pmf(x1, 10, 2, 10), 1e-12));
  }
}

TEST_CASE("verification record") {
  const auto rep = verify_alpha_control(ref::example_ek(), 0.2, 0.05);
  const auto j = nlohmann::json::parse(verify_json(rep));
  CHECK(j.at("max_type1").get<double>() == rep.max_type1);
  CHECK(j.at("argmax_rho").get<double>() == rep.argmax_rho);
  CHECK(j.at("grid_step").get<double>() == 5e-4);
  CHECK(j.at("pass").get<bool>());
}

TEST_CASE("atomic writes") {
  const auto dir = scratch("atomic");
  const auto file = dir / "sub" / "out.txt";
  write_atomic(file, "first\n");
  write_atomic(file, "second\n");
  std::ifstream in(file);
  std::string s((std::istreambuf_iterator<char>(in)), {});
  CHECK(s == "second\n");
  CHECK_FALSE(fs::exists(dir / "sub" / "out.txt.tmp"));
  fs::remove_all(dir);
}

TEST_CASE("design table text") {
  const auto text = design_table_text({{"optimal", ref::example_optimal()}, {"ek", ref::example_ek()}});
  CHECK_THAT(text, ContainsSubstring("optimal n(x1)"));
  CHECK_THAT(text, ContainsSubstring("ek c(x1)"));
  CHECK_THAT(text, ContainsSubstring("-inf"));
  CHECK(design_table_text({}).empty());
}

TEST_CASE("plot rendering") {
  const auto oc = operating_characteristics(ref::example_nice(), ref::example_params());
  const auto svg = plot_svg(oc, 40);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK_THAT(svg, ContainsSubstring("cp(x1)"));
  CHECK_THAT(svg, ContainsSubstring("</svg>"));
}

TEST_CASE("configuration parsing") {
  const auto cfg = parse_config(R"({
    "params": {"rho0": 0.2, "rho1": 0.4, "alpha": 0.05, "beta": 0.2},
    "space": {"n1_min": 10, "n1_max": 10, "n_max": 40},
    "flags": {"monotone_ce": true, "min_conditional_power": 0.1},
    "objective": {"kind": "expected_n_gamma", "gamma": 2.5},
    "solver": {"node_limit": 1000, "row_slack": 1e-6},
    "variants": ["optimal", "nice"],
    "formats": ["csv"],
    "grid_step": 0.001,
    "output_dir": "x",
    "scenarios": [{"rho0": 0.1, "rho1": 0.3}]
  })");
  CHECK(cfg.space.n_max_rule == SearchSpace::NMaxRule::Explicit);
  CHECK(cfg.space.n_max == 40);
  CHECK(cfg.flags.monotone_ce);
  CHECK(cfg.flags.min_conditional_power == 0.1);
  CHECK(cfg.objective.kind == ObjectiveSpec::Kind::ExpectedNGamma);
  CHECK(cfg.solver.node_limit == 1000);
  CHECK(cfg.build.row_slack == 1e-6);
  CHECK(cfg.variants == std::vector<Variant>{Variant::Optimal, Variant::Nice});
  CHECK(cfg.variants_given);
  CHECK(cfg.formats == std::set<std::string>{"csv"});
  CHECK(cfg.grid_step == 0.001);
  CHECK(cfg.scenarios.size() == 1);
  CHECK(flags_for(Variant::Nice, cfg.flags).min_conditional_power == 0.1);
  CHECK(flags_for(Variant::Custom, cfg.flags) == cfg.flags);

  const auto def = parse_config("{}");
  CHECK(def.space.n_max_rule == SearchSpace::NMaxRule::SimonPlus10Pct);
  CHECK(def.space.rounding == Rounding::Ceil);
  CHECK(parse_config(R"({"space": {"rounding": "floor"}})").space.rounding == Rounding::Floor);

  // minimax total 33 for these parameters; 36.3 rounds up to 37
  const auto mm = parse_config(R"({"params": {"rho0": 0.2, "rho1": 0.4, "alpha": 0.05, "beta": 0.2},
                                  "space": {"n_max_rule": "simon_minimax_plus_10pct"}})");
  CHECK(mm.space.resolved(mm.params).n_max == 37);
}

TEST_CASE("configuration errors") {
  for (const char* bad : {
           R"({"params": {"alpha": 1.5}})",
           R"({"params": {"rho0": 0.5, "rho1": 0.4}})",
           R"({"params": {"rho": 0.5}})",
           R"({"colour": 1})",
           R"({"params": {"alpha": "small"}})",
           R"({"space": {"n_max": 40, "n1_min": 0}})",
           R"({"space": {"n_max": 10, "n1_max": 12}})",
           R"({"space": {"n_max_rule": "half"}})",
           R"({"flags": {"min_conditional_power": 2}})",
           R"({"objective": {"kind": "median"}})",
           R"({"objective": {"kind": "expected_n_gamma", "gamma": 0.5}})",
           R"({"solver": {"threads": 0}})",
           R"({"solver": {"row_slack": -1}})",
           R"({"variants": ["best"]})",
           R"({"variants": []})",
           R"({"formats": ["pdf"]})",
           R"({"grid_step": 0})",
           R"({"scenarios": [{"rho0": 0.3}]})",
           R"({"scenarios": {"rho0": 0.3}})",
           R"([1, 2])",
           "{not json",
       }) {
    INFO(bad);
    CHECK_THROWS_AS(parse_config(bad), ConfigError);
  }
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("comparison table is independent of thread count") {
  RunConfig cfg = parse_config(R"({
    "params": {"alpha": 0.1, "beta": 0.2},
    "space": {"n1_min": 2, "n1_max": 6, "n_max": 12},
    "scenarios": [{"rho0": 0.2, "rho1": 0.5}, {"rho0": 0.3, "rho1": 0.6}, {"rho0": 0.5, "rho1": 0.55}]
  })");
  const std::vector<Variant> vs{Variant::Optimal, Variant::EK, Variant::Nice};
  const auto one = run_compare(cfg, vs, 1);
  const auto many = run_compare(cfg, vs, 4);
  CHECK(compare_csv(one, vs) == compare_csv(many, vs));
  CHECK(compare_text(one, vs) == compare_text(many, vs));

  REQUIRE(one.size() == 3);
  for (std::size_t r = 0; r < 2; ++r) {
    const auto& row = one[r];
    CHECK_FALSE(row.failed());
    CHECK(row.n_max == 12);
    REQUIRE(row.simon_expected_n);
    const double o = row.cells.at(Variant::Optimal).objective;
    CHECK(o <= row.cells.at(Variant::EK).objective + 1e-9);
    CHECK(o <= row.cells.at(Variant::Nice).objective + 1e-9);
  }
  // a 5-point gap cannot reach 80% power within 12 patients
  CHECK(one[2].failed());
  CHECK_FALSE(one[2].cells.at(Variant::Optimal).feasible);

  const auto csv = csv_rows(compare_csv(one, vs));
  REQUIRE(csv.size() == 4);
  CHECK(csv[0].front() == "rho0");
  CHECK(csv[3][3] == "infeasible");
  CHECK(csv[3].back() == "true");
  CHECK_THAT(compare_text(one, vs), ContainsSubstring("!"));
  CHECK_THROWS_AS(run_compare(cfg, vs, 0), ConfigError);
}

TEST_CASE("ditto marker for repeated cells") {
  ComparisonRow row;
  row.scenario = {0.2, 0.4};
  row.simon_expected_n = 20.58;
  for (auto v : {Variant::Optimal, Variant::EK, Variant::Nice}) {
    auto& c = row.cells[v];
    c.ran = c.feasible = c.alpha_pass = true;
    c.objective = v == Variant::Nice ? 19.9 : 19.78640;
  }
  const std::vector<Variant> vs{Variant::Optimal, Variant::EK, Variant::Nice};
  const auto text = compare_text({row}, vs);
  CHECK_THAT(text, ContainsSubstring("19.78640"));
  CHECK_THAT(text, ContainsSubstring("..."));
  CHECK_THAT(text, ContainsSubstring("19.90000"));
  CHECK_THAT(compare_csv({row}, vs), ContainsSubstring("19.78640,0,19.78640"));
}
