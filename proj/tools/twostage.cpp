// SPDX-License-Identifier: Apache-2.0
//
// twostage: optimize, verify and compare adaptive two-stage designs.
//
// Exit codes: 0 ok, 1 runtime error, 2 invalid input, 3 infeasible,
// 4 verification failed, 5 solver limit reached before optimality.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "twostage/report.hpp"

namespace fs = std::filesystem;
using namespace twostage;
using namespace twostage::report;

namespace {

enum Exit : int { kOk = 0, kRuntime = 1, kInvalid = 2, kInfeasible = 3, kVerifyFailed = 4, kLimits = 5 };

struct Common {
  std::string config;
  std::string variant;
  std::string out;
  std::string formats;
  bool formats_given = false;
  std::optional<double> grid_step;
  std::optional<int> threads;
};

std::set<std::string> parse_formats(const std::string& list) {
  std::set<std::string> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty() || item == "none") continue;
    if (!known_formats().count(item)) throw ConfigError("unknown format '" + item + "'");
    out.insert(item);
  }
  return out;
}

RunConfig load(const Common& c) {
  RunConfig cfg = c.config.empty() ? parse_config("{}") : load_config(c.config);
  if (!c.variant.empty()) {
    cfg.variants = {parse_variant(c.variant)};
    cfg.variants_given = true;
  }
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.formats_given) cfg.formats = parse_formats(c.formats);
  if (c.grid_step) {
    if (!(*c.grid_step > 0.0)) throw ConfigError("--grid-step must be positive");
    cfg.grid_step = *c.grid_step;
  }
  if (c.threads) {
    if (*c.threads < 1) throw ConfigError("--threads must be >= 1");
    cfg.solver.threads = *c.threads;
  }
  cfg.validate();
  return cfg;
}

std::string result_json(const SearchResult& r, const TrialParams& p) {
  nlohmann::ordered_json j;
  j["feasible"] = r.feasible;
  j["objective"] = r.objective;
  j["n1"] = r.best.n1;
  j["n_max"] = r.space.n_max;
  j["n1_range"] = {r.space.n1_min, r.space.n1_max};
  j["expected_n_null"] = r.oc.expected_n_null;
  j["power"] = r.oc.power_at_rho1;
  j["power_target"] = 1.0 - p.beta;
  j["max_type1"] = r.alpha.max_type1;
  j["terminated_by"] = to_string(r.terminated_by);
  j["limits_hit"] = r.limits_hit;
  j["nodes"] = r.nodes;
  auto per = nlohmann::ordered_json::array();
  for (const auto& s : r.per_n1) {
    nlohmann::ordered_json e;
    e["n1"] = s.n1;
    e["status"] = to_string(s.status);
    if (std::isfinite(s.objective)) e["objective"] = s.objective;
    else e["objective"] = nullptr;
    e["nodes"] = s.nodes;
    per.push_back(e);
  }
  j["per_n1"] = per;
  return j.dump(2) + "\n";
}

int cmd_optimize(const Common& c) {
  const RunConfig cfg = load(c);
  const auto& variants = cfg.variants;
  std::vector<SearchResult> results(variants.size());
  std::vector<std::string> errors(variants.size());
  parallel_for(variants.size(), cfg.solver.threads, [&](std::size_t i) {
    try {
      SearchOptions so = cfg.search_options();
      so.solver.threads = 1;
      results[i] = optimize(cfg.params, cfg.space, flags_for(variants[i], cfg.flags), cfg.objective, so);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  int code = kOk;
  auto worsen = [&](int e) {
    if (code == kOk || (code != kRuntime && e == kRuntime)) code = e;
  };
  const fs::path out = cfg.output_dir;
  std::vector<std::pair<std::string, Design>> table;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const std::string name = to_string(variants[i]);
    const auto& r = results[i];
    if (!errors[i].empty()) {
      std::cerr << name << ": " << errors[i] << "\n";
      worsen(kRuntime);
      continue;
    }
    if (!r.feasible) {
      std::cerr << name << ": infeasible for every n1 in [" << r.space.n1_min << ", " << r.space.n1_max << "]\n";
      worsen(kInfeasible);
      continue;
    }
    const bool power_ok = r.oc.power_at_rho1 >= 1.0 - cfg.params.beta - 1e-9;
    std::cout << name << ": objective " << fixed(r.objective, 5) << "  n1 " << r.best.n1 << "  n_max "
              << r.space.n_max << "  power " << fixed(r.oc.power_at_rho1, 5) << "  max type I "
              << fixed(r.alpha.max_type1, 6) << (r.alpha.pass ? "" : " (FAILS)")
              << (r.limits_hit ? "  [limit reached]" : "") << "\n";
    table.emplace_back(name, r.best);

    const fs::path dir = out / name;
    write_atomic(dir / "verify.json", verify_json(r.alpha));
    if (cfg.formats.count("csv")) {
      write_atomic(dir / "design.csv", design_csv(r.best));
      write_atomic(dir / "oc.csv", oc_csv(r.oc));
    }
    if (cfg.formats.count("json")) write_atomic(dir / "result.json", result_json(r, cfg.params));
    if (cfg.formats.count("svg-plot-data")) write_atomic(dir / "oc.svg", plot_svg(r.oc, r.space.n_max));

    if (!r.alpha.pass || !power_ok) worsen(kVerifyFailed);
    else if (r.limits_hit) worsen(kLimits);
  }
  if (!table.empty()) {
    const std::string text = design_table_text(table);
    std::cout << "\n" << text;
    if (cfg.formats.count("table-text")) write_atomic(out / "designs.txt", text);
  }
  return code;
}

int cmd_verify(const Common& c, const std::string& design_path, double rho0, double alpha) {
  RunConfig cfg = load(c);
  if (rho0 > 0.0) cfg.params.rho0 = rho0;
  if (alpha > 0.0) cfg.params.alpha = alpha;
  if (!(cfg.params.rho0 > 0.0 && cfg.params.rho0 < 1.0) || !(cfg.params.alpha > 0.0 && cfg.params.alpha < 1.0))
    throw ConfigError("rho0 and alpha must lie in (0,1)");
  if (!(cfg.grid_step <= cfg.params.rho0)) throw ConfigError("grid step must not exceed rho0");
  std::ifstream in(design_path);
  if (!in) throw ConfigError("cannot read design " + design_path);
  std::stringstream buf;
  buf << in.rdbuf();
  const Design d = parse_design_csv(buf.str());
  const auto rep = verify_alpha_control(d, cfg.params.rho0, cfg.params.alpha, cfg.grid_step);
  const std::string text = verify_json(rep);
  std::cout << text;
  if (!c.out.empty()) write_atomic(fs::path(c.out) / "verify.json", text);
  return rep.pass ? kOk : kVerifyFailed;
}

void print_simon(const char* label, const SimonDesign& s) {
  std::printf("%-8s r1/n1 = %d/%d  r/n = %d/%d  E[N | rho0] = %.5f  type I = %.5f  power = %.5f\n", label, s.r1,
              s.n1, s.r, s.n_total, s.expected_n_null, s.type1, s.power);
}

int cmd_simon(const Common& c) {
  const RunConfig cfg = load(c);
  const auto opt = simon_optimal(cfg.params);
  const auto mm = simon_minimax(cfg.params);
  print_simon("optimal", opt);
  print_simon("minimax", mm);
  std::printf("n_max    %d (ceil), %d (floor)\n", n_max_from_simon_total(opt.n_total, Rounding::Ceil),
              n_max_from_simon_total(opt.n_total, Rounding::Floor));
  return kOk;
}

int cmd_compare(const Common& c) {
  RunConfig cfg = load(c);
  if (cfg.scenarios.empty()) cfg.scenarios.push_back({cfg.params.rho0, cfg.params.rho1});
  const std::vector<Variant> variants =
      cfg.variants_given ? cfg.variants : std::vector<Variant>{Variant::Optimal, Variant::EK, Variant::Nice};
  const auto rows = run_compare(cfg, variants, cfg.solver.threads);
  const std::string text = compare_text(rows, variants);
  std::cout << text;
  const fs::path out = cfg.output_dir;
  write_atomic(out / "compare.csv", compare_csv(rows, variants));
  if (cfg.formats.count("table-text")) write_atomic(out / "compare.txt", text);

  int code = kOk;
  for (const auto& r : rows) {
    if (!r.error.empty()) code = std::max<int>(code, kRuntime);
    for (const auto& [v, cell] : r.cells) {
      if (!cell.error.empty()) code = kRuntime;
      else if (!cell.feasible && code == kOk) code = kInfeasible;
      else if (cell.feasible && !cell.alpha_pass && code == kOk) code = kVerifyFailed;
      else if (cell.limits_hit && code == kOk) code = kLimits;
    }
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal adaptive two-stage designs for single-arm binary endpoints"};
  app.require_subcommand(1);
  bool seedless = false;
  app.add_flag("--seedless", seedless, "Reserved; rejected");

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--variant", common.variant, "optimal | ek | nice | custom");
    sub->add_option("--out", common.out, "Output directory");
    sub->add_option_function<std::string>(
        "--format",
        [&](const std::string& v) {
          common.formats = v;
          common.formats_given = true;
        },
        "Comma list of table-text, csv, json, svg-plot-data (empty for none)");
    sub->add_option_function<double>(
        "--grid-step", [&](const double& v) { common.grid_step = v; }, "Grid step for the type I error check");
    sub->add_option_function<int>(
        "--threads", [&](const int& v) { common.threads = v; }, "Worker threads");
    sub->add_flag("--seedless", seedless, "Reserved; rejected");
  };

  auto* opt = app.add_subcommand("optimize", "Optimize one design per requested variant");
  add_common(opt);
  auto* ver = app.add_subcommand("verify", "Check type I error control of a design file");
  add_common(ver);
  std::string design_path;
  double rho0 = -1.0, alpha = -1.0;
  ver->add_option("design", design_path, "design.csv")->required();
  ver->add_option("--rho0", rho0, "Null response rate");
  ver->add_option("--alpha", alpha, "Type I error level");
  auto* sim = app.add_subcommand("simon", "Print the Simon optimal and minimax designs");
  add_common(sim);
  auto* cmp = app.add_subcommand("compare", "Multi-scenario comparison table");
  add_common(cmp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalid;
  }
  if (seedless) {
    std::cerr << "error: --seedless is reserved; the solver has no randomness\n";
    return kInvalid;
  }
  try {
    if (*opt) return cmd_optimize(common);
    if (*ver) return cmd_verify(common, design_path, rho0, alpha);
    if (*sim) return cmd_simon(common);
    return cmd_compare(common);
  } catch (const ConfigError& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return kInvalid;
  } catch (const StructuralError& e) {
    std::cerr << "invalid design: " << e.what() << "\n";
    return kInvalid;
  } catch (const CapacityError& e) {
    std::cerr << e.what() << "\n";
    return kInfeasible;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
