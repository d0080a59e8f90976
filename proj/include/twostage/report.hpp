// SPDX-License-Identifier: Apache-2.0
//
// Run configuration, report files and the multi-scenario comparison table.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"
#include "twostage/search.hpp"

namespace twostage::report {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Variant { Optimal, EK, Nice, Custom };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::Optimal: return "optimal";
    case Variant::EK: return "ek";
    case Variant::Nice: return "nice";
    default: return "custom";
  }
}

inline Variant parse_variant(std::string_view s) {
  if (s == "optimal") return Variant::Optimal;
  if (s == "ek") return Variant::EK;
  if (s == "nice") return Variant::Nice;
  if (s == "custom") return Variant::Custom;
  throw ConfigError("unknown variant '" + std::string(s) + "'");
}

inline ConstraintFlags flags_for(Variant v, const ConstraintFlags& custom) {
  ConstraintFlags f;
  switch (v) {
    case Variant::Optimal: f = ConstraintFlags::optimal(); break;
    case Variant::EK: f = ConstraintFlags::ek(); break;
    case Variant::Nice: f = ConstraintFlags::nice(); break;
    default: return custom;
  }
  f.min_conditional_power = custom.min_conditional_power;
  return f;
}

inline const std::set<std::string>& known_formats() {
  static const std::set<std::string> f{"table-text", "csv", "json", "svg-plot-data"};
  return f;
}

struct Scenario {
  double rho0 = 0.0;
  double rho1 = 0.0;
};

struct RunConfig {
  TrialParams params;
  SearchSpace space;
  ConstraintFlags flags;  // used by the custom variant; min_conditional_power applies to all
  ObjectiveSpec objective;
  SolverOptions solver;
  BuildOptions build;
  std::vector<Variant> variants{Variant::Optimal};
  bool variants_given = false;
  std::string output_dir = "out";
  std::set<std::string> formats{"table-text", "csv", "json"};
  double grid_step = kDefaultAlphaGridStep;
  std::vector<Scenario> scenarios;  // compare only

  SearchOptions search_options() const {
    SearchOptions o;
    o.solver = solver;
    o.alpha_grid_step = grid_step;
    o.build = build;
    return o;
  }

  void validate() const {
    try {
      params.validate();
      objective.validate();
      solver.validate();
      if (space.n_max_rule == SearchSpace::NMaxRule::Explicit) {
        if (space.n_max < 1) throw ConfigError("space.n_max must be positive for the explicit rule");
        SearchSpace s = space;
        (void)s.resolved(params);
      } else if (space.n1_min < 1) {
        throw ConfigError("space.n1_min must be >= 1");
      }
      if (flags.min_conditional_power && !(*flags.min_conditional_power >= 0.0 && *flags.min_conditional_power <= 1.0))
        throw ConfigError("flags.min_conditional_power must lie in [0,1]");
      if (!(build.row_slack >= 0.0)) throw ConfigError("solver.row_slack must be >= 0");
      if (!(grid_step > 0.0 && grid_step <= params.rho0)) throw ConfigError("grid_step must lie in (0, rho0]");
      if (variants.empty()) throw ConfigError("at least one variant is required");
      for (const auto& f : formats)
        if (!known_formats().count(f)) throw ConfigError("unknown format '" + f + "'");
      for (const auto& sc : scenarios) {
        TrialParams p = params;
        p.rho0 = sc.rho0;
        p.rho1 = sc.rho1;
        p.validate();
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, std::string_view where, std::initializer_list<std::string_view> keys) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (const auto& item : obj.items()) {
    const bool known = std::find(keys.begin(), keys.end(), item.key()) != keys.end();
    if (!known) throw ConfigError("unknown key '" + std::string(where) + "." + item.key() + "'");
  }
}

template <class T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "'");
  }
}

}  // namespace detail

inline RunConfig parse_config(std::string_view text) {
  using detail::json;
  json root;
  try {
    root = json::parse(text.begin(), text.end(), nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  detail::reject_unknown(root, "config",
                         {"params", "space", "flags", "objective", "solver", "variants", "output_dir", "formats",
                          "grid_step", "scenarios"});
  RunConfig cfg;
  if (root.contains("params")) {
    const auto& p = root["params"];
    detail::reject_unknown(p, "params", {"rho0", "rho1", "alpha", "beta"});
    detail::read(p, "rho0", cfg.params.rho0);
    detail::read(p, "rho1", cfg.params.rho1);
    detail::read(p, "alpha", cfg.params.alpha);
    detail::read(p, "beta", cfg.params.beta);
  }
  if (root.contains("space")) {
    const auto& s = root["space"];
    detail::reject_unknown(s, "space", {"n1_min", "n1_max", "n_max", "n_max_rule", "rounding"});
    detail::read(s, "n1_min", cfg.space.n1_min);
    detail::read(s, "n1_max", cfg.space.n1_max);
    detail::read(s, "n_max", cfg.space.n_max);
    std::string rule = s.contains("n_max") ? "explicit" : "simon_plus_10pct";
    detail::read(s, "n_max_rule", rule);
    if (rule == "explicit") cfg.space.n_max_rule = SearchSpace::NMaxRule::Explicit;
    else if (rule == "simon_plus_10pct") cfg.space.n_max_rule = SearchSpace::NMaxRule::SimonPlus10Pct;
    else if (rule == "simon_minimax_plus_10pct") cfg.space.n_max_rule = SearchSpace::NMaxRule::SimonMinimaxPlus10Pct;
    else throw ConfigError("space.n_max_rule must be 'explicit', 'simon_plus_10pct' or 'simon_minimax_plus_10pct'");
    std::string rounding = "ceil";
    detail::read(s, "rounding", rounding);
    if (rounding == "ceil") cfg.space.rounding = Rounding::Ceil;
    else if (rounding == "floor") cfg.space.rounding = Rounding::Floor;
    else throw ConfigError("space.rounding must be 'ceil' or 'floor'");
  }
  if (root.contains("flags")) {
    const auto& f = root["flags"];
    detail::reject_unknown(f, "flags", {"monotone_ce", "contiguous_stopping", "unimodal_n", "min_conditional_power"});
    detail::read(f, "monotone_ce", cfg.flags.monotone_ce);
    detail::read(f, "contiguous_stopping", cfg.flags.contiguous_stopping);
    detail::read(f, "unimodal_n", cfg.flags.unimodal_n);
    if (f.contains("min_conditional_power") && !f["min_conditional_power"].is_null()) {
      double v = 0.0;
      detail::read(f, "min_conditional_power", v);
      cfg.flags.min_conditional_power = v;
    }
  }
  if (root.contains("objective")) {
    const auto& o = root["objective"];
    detail::reject_unknown(o, "objective", {"kind", "gamma", "prior_support", "prior_mass"});
    std::string kind = "expected_n";
    detail::read(o, "kind", kind);
    if (kind == "expected_n") cfg.objective.kind = ObjectiveSpec::Kind::ExpectedN;
    else if (kind == "expected_n_gamma") cfg.objective.kind = ObjectiveSpec::Kind::ExpectedNGamma;
    else if (kind == "expected_exp_n") cfg.objective.kind = ObjectiveSpec::Kind::ExpectedExpN;
    else if (kind == "prior_weighted") cfg.objective.kind = ObjectiveSpec::Kind::PriorWeighted;
    else throw ConfigError("unknown objective kind '" + kind + "'");
    detail::read(o, "gamma", cfg.objective.gamma);
    detail::read(o, "prior_support", cfg.objective.prior.support);
    detail::read(o, "prior_mass", cfg.objective.prior.mass);
  }
  if (root.contains("solver")) {
    const auto& s = root["solver"];
    detail::reject_unknown(s, "solver",
                           {"feasibility_tol", "optimality_gap", "node_limit", "time_limit", "threads", "row_slack"});
    detail::read(s, "feasibility_tol", cfg.solver.feasibility_tol);
    detail::read(s, "optimality_gap", cfg.solver.optimality_gap);
    detail::read(s, "node_limit", cfg.solver.node_limit);
    detail::read(s, "time_limit", cfg.solver.time_limit);
    detail::read(s, "threads", cfg.solver.threads);
    detail::read(s, "row_slack", cfg.build.row_slack);
  }
  if (root.contains("variants")) {
    std::vector<std::string> names;
    detail::read(root, "variants", names);
    cfg.variants.clear();
    cfg.variants_given = true;
    for (const auto& n : names) cfg.variants.push_back(parse_variant(n));
  }
  detail::read(root, "output_dir", cfg.output_dir);
  if (root.contains("formats")) {
    std::vector<std::string> names;
    detail::read(root, "formats", names);
    cfg.formats = {names.begin(), names.end()};
  }
  detail::read(root, "grid_step", cfg.grid_step);
  if (root.contains("scenarios")) {
    if (!root["scenarios"].is_array()) throw ConfigError("scenarios must be an array");
    for (const auto& sc : root["scenarios"]) {
      detail::reject_unknown(sc, "scenarios[]", {"rho0", "rho1"});
      Scenario s;
      if (!sc.contains("rho0") || !sc.contains("rho1")) throw ConfigError("each scenario needs rho0 and rho1");
      detail::read(sc, "rho0", s.rho0);
      detail::read(sc, "rho1", s.rho1);
      cfg.scenarios.push_back(s);
    }
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

// ---------------------------------------------------------------- formatting

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

/// Shortest text that parses back to the same double.
inline std::string exact(double v) {
  char buf[64];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

/// Writes next to the target and renames over it, so readers never see a partial file.
inline void write_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string design_csv(const Design& d) {
  std::ostringstream os;
  os << "# n1=" << d.n1 << " n_max=" << d.n_max << "\n";
  os << "x1,n,c\n";
  for (int x1 = 0; x1 <= d.n1; ++x1) os << x1 << ',' << d.n[x1] << ',' << d.c[x1].to_string() << '\n';
  return os.str();
}

/// Reads design.csv. Without an n_max comment, n_max is the largest n.
inline Design parse_design_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  Design d;
  int declared_n_max = -1;
  bool header = false;
  int expect = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("n_max=");
      if (pos != std::string::npos) declared_n_max = std::stoi(line.substr(pos + 6));
      continue;
    }
    if (!header) {
      if (line != "x1,n,c") throw StructuralError("design csv: expected header 'x1,n,c'");
      header = true;
      continue;
    }
    std::istringstream fields(line);
    std::string a, b, c;
    if (!std::getline(fields, a, ',') || !std::getline(fields, b, ',') || !std::getline(fields, c))
      throw StructuralError("design csv: malformed row '" + line + "'");
    try {
      if (std::stoi(a) != expect) throw StructuralError("design csv: rows must list x1 = 0, 1, ... in order");
      d.n.push_back(std::stoi(b));
      d.c.push_back(CriticalValue::parse(c));
    } catch (const std::logic_error& e) {
      if (dynamic_cast<const StructuralError*>(&e)) throw;
      throw StructuralError("design csv: malformed row '" + line + "'");
    }
    ++expect;
  }
  if (d.n.empty()) throw StructuralError("design csv: no rows");
  d.n1 = static_cast<int>(d.n.size()) - 1;
  d.n_max = declared_n_max >= 0 ? declared_n_max : d.max_total();
  require_valid(d);
  return d;
}

inline std::string oc_csv(const OperatingCharacteristics& oc) {
  std::ostringstream os;
  os << "x1,weight0,n,c,ce,cp\n";
  for (const auto& r : oc.per_outcome)
    os << r.x1 << ',' << exact(r.weight0) << ',' << r.n << ',' << r.c.to_string() << ',' << exact(r.ce) << ','
       << exact(r.cp) << '\n';
  return os.str();
}

inline std::string verify_json(const AlphaReport& a) {
  nlohmann::ordered_json j;
  j["max_type1"] = a.max_type1;
  j["argmax_rho"] = a.argmax_rho;
  j["grid_step"] = a.grid_step;
  j["pass"] = a.pass;
  return j.dump(2) + "\n";
}

/// Side-by-side n(.) and c(.) rows per design, one column per x1.
inline std::string design_table_text(const std::vector<std::pair<std::string, Design>>& designs) {
  if (designs.empty()) return {};
  std::size_t label = 4;
  int width = 4;
  int n1 = 0;
  for (const auto& [name, d] : designs) {
    label = std::max(label, name.size() + 7);
    n1 = std::max(n1, d.n1);
    for (int x1 = 0; x1 <= d.n1; ++x1)
      width = std::max<int>(width, static_cast<int>(d.c[x1].to_string().size()) + 1);
  }
  std::ostringstream os;
  auto cell = [&](const std::string& s) {
    os << std::string(static_cast<std::size_t>(std::max<int>(0, width - static_cast<int>(s.size()))), ' ') << s;
  };
  os << std::string(label, ' ');
  for (int x1 = 0; x1 <= n1; ++x1) cell(std::to_string(x1));
  os << '\n';
  for (const auto& [name, d] : designs) {
    const std::string n_label = name + " n(x1)";
    const std::string c_label = name + " c(x1)";
    os << n_label << std::string(label - n_label.size(), ' ');
    for (int x1 = 0; x1 <= d.n1; ++x1) cell(std::to_string(d.n[x1]));
    os << '\n' << c_label << std::string(label - c_label.size(), ' ');
    for (int x1 = 0; x1 <= d.n1; ++x1) cell(d.c[x1].to_string());
    os << '\n';
  }
  return os.str();
}

/// Four panels over x1: n, c, ce and cp. Sentinel critical values are drawn
/// at the panel edges.
inline std::string plot_svg(const OperatingCharacteristics& oc, int n_max) {
  const int panel_w = 320, panel_h = 200, pad = 40;
  const auto& rows = oc.per_outcome;
  const int n1 = rows.empty() ? 0 : rows.back().x1;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * (panel_w + pad) << "\" height=\""
     << 2 * (panel_h + pad) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  struct Panel {
    const char* title;
    double lo, hi;
    double (*value)(const OutcomeRow&, int);
  };
  const Panel panels[] = {
      {"n(x1)", 0.0, static_cast<double>(n_max), [](const OutcomeRow& r, int) { return static_cast<double>(r.n); }},
      {"c(x1)", -1.0, static_cast<double>(n_max),
       [](const OutcomeRow& r, int nm) {
         if (r.c.is_neg_inf()) return -1.0;
         if (r.c.is_pos_inf()) return static_cast<double>(nm);
         return static_cast<double>(r.c.value());
       }},
      {"ce(x1)", 0.0, 1.0, [](const OutcomeRow& r, int) { return r.ce; }},
      {"cp(x1)", 0.0, 1.0, [](const OutcomeRow& r, int) { return r.cp; }},
  };
  for (int p = 0; p < 4; ++p) {
    const int ox = (p % 2) * (panel_w + pad) + pad / 2;
    const int oy = (p / 2) * (panel_h + pad) + pad / 2;
    const auto& pn = panels[p];
    os << "  <g transform=\"translate(" << ox << ',' << oy << ")\">\n";
    os << "    <rect width=\"" << panel_w << "\" height=\"" << panel_h << "\" fill=\"none\" stroke=\"#888\"/>\n";
    os << "    <text x=\"4\" y=\"-4\">" << pn.title << "</text>\n";
    os << "    <polyline fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1.5\" points=\"";
    for (const auto& r : rows) {
      const double fx = n1 > 0 ? static_cast<double>(r.x1) / n1 : 0.5;
      const double v = pn.value(r, n_max);
      const double fy = pn.hi > pn.lo ? (v - pn.lo) / (pn.hi - pn.lo) : 0.0;
      os << fixed(fx * panel_w, 2) << ',' << fixed((1.0 - fy) * panel_h, 2) << ' ';
    }
    os << "\"/>\n  </g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

// ---------------------------------------------------------------- comparison

/// Calls fn(i) for i in [0, count) on up to `threads` threads. Work is
/// handed out by index, so callers writing to slot i get scheduling-free
/// results.
template <class Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  const int n_workers = std::max(1, std::min<int>(threads, static_cast<int>(count)));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) fn(i);
  };
  if (n_workers == 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

struct VariantCell {
  bool ran = false;
  bool feasible = false;
  double objective = 0.0;
  int n1 = 0;
  bool alpha_pass = false;
  bool limits_hit = false;
  double power = 0.0;
  double seconds = 0.0;  // not written to any table
  Design design;
  std::string error;
};

struct ComparisonRow {
  Scenario scenario;
  int n_max = 0;
  std::map<Variant, VariantCell> cells;
  std::optional<double> simon_expected_n;
  std::string error;

  bool failed() const {
    if (!error.empty()) return true;
    for (const auto& [v, c] : cells)
      if (!c.error.empty() || !c.feasible || c.limits_hit) return true;
    return false;
  }
};

/// Runs every (scenario, variant) pair; up to `threads` run at once. Rows
/// come back in scenario order regardless of scheduling.
inline std::vector<ComparisonRow> run_compare(const RunConfig& cfg, const std::vector<Variant>& variants,
                                              int threads = 1) {
  if (threads < 1) throw ConfigError("threads must be >= 1");
  std::vector<ComparisonRow> rows(cfg.scenarios.size());
  struct Task {
    std::size_t row;
    std::optional<Variant> variant;  // empty: Simon reference
  };
  std::vector<Task> tasks;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    rows[r].scenario = cfg.scenarios[r];
    tasks.push_back({r, std::nullopt});
    for (auto v : variants) {
      rows[r].cells[v];
      tasks.push_back({r, v});
    }
  }
  // cells are preallocated, so workers only write to their own slots
  std::vector<std::string> row_errors(rows.size());
  std::vector<int> row_n_max(rows.size(), 0);
  parallel_for(tasks.size(), threads, [&](std::size_t t) {
    const auto& task = tasks[t];
    TrialParams p = cfg.params;
    p.rho0 = cfg.scenarios[task.row].rho0;
    p.rho1 = cfg.scenarios[task.row].rho1;
    if (!task.variant) {
      try {
        rows[task.row].simon_expected_n = simon_optimal(p).expected_n_null;
        row_n_max[task.row] = cfg.space.resolved(p).n_max;
      } catch (const std::exception& e) {
        row_errors[task.row] = e.what();
      }
      return;
    }
    VariantCell& cell = rows[task.row].cells.at(*task.variant);
    cell.ran = true;
    try {
      SearchOptions so = cfg.search_options();
      so.solver.threads = 1;
      const auto res = optimize(p, cfg.space, flags_for(*task.variant, cfg.flags), cfg.objective, so);
      cell.feasible = res.feasible;
      cell.limits_hit = res.limits_hit;
      if (res.feasible) {
        cell.objective = res.objective;
        cell.n1 = res.best.n1;
        cell.alpha_pass = res.alpha.pass;
        cell.power = res.oc.power_at_rho1;
        cell.seconds = res.seconds;
        cell.design = res.best;
      }
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  });
  for (std::size_t r = 0; r < rows.size(); ++r) {
    rows[r].error = row_errors[r];
    rows[r].n_max = row_n_max[r];
  }
  return rows;
}

inline std::string cell_text(const VariantCell& c) {
  if (!c.error.empty()) return "error";
  if (!c.feasible) return "infeasible";
  return fixed(c.objective, 5);
}

/// Machine-readable table; every value is written out.
inline std::string compare_csv(const std::vector<ComparisonRow>& rows, const std::vector<Variant>& variants) {
  std::ostringstream os;
  os << "rho0,rho1,n_max";
  for (auto v : variants) os << ',' << to_string(v) << ',' << to_string(v) << "_n1";
  os << ",simon,alpha_pass,failed\n";
  for (const auto& r : rows) {
    os << fixed(r.scenario.rho0, 2) << ',' << fixed(r.scenario.rho1, 2) << ',' << r.n_max;
    bool alpha_ok = true;
    for (auto v : variants) {
      const auto& c = r.cells.at(v);
      os << ',' << cell_text(c) << ',' << (c.feasible ? std::to_string(c.n1) : std::string());
      if (c.feasible && !c.alpha_pass) alpha_ok = false;
    }
    os << ',' << (r.simon_expected_n ? fixed(*r.simon_expected_n, 5) : std::string("error")) << ','
       << (alpha_ok ? "true" : "false") << ',' << (r.failed() ? "true" : "false") << '\n';
  }
  return os.str();
}

/// Human-readable table; a cell equal to its left neighbour shows "...".
inline std::string compare_text(const std::vector<ComparisonRow>& rows, const std::vector<Variant>& variants) {
  std::ostringstream os;
  auto col = [&](const std::string& s, int w) {
    os << std::string(static_cast<std::size_t>(std::max<int>(0, w - static_cast<int>(s.size()))), ' ') << s;
  };
  col("rho0", 6);
  col("rho1", 6);
  for (auto v : variants) col(to_string(v), 12);
  col("simon", 10);
  os << '\n';
  for (const auto& r : rows) {
    col(fixed(r.scenario.rho0, 1), 6);
    col(fixed(r.scenario.rho1, 1), 6);
    std::string left;
    for (auto v : variants) {
      const std::string text = cell_text(r.cells.at(v));
      col(text == left ? "..." : text, 12);
      left = text;
    }
    col(r.simon_expected_n ? fixed(*r.simon_expected_n, 1) : "error", 10);
    os << (r.failed() ? "  !" : "") << '\n';
  }
  return os.str();
}

}  // namespace twostage::report
