#include "nsdg/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "nsdg/bsde.hpp"
#include "nsdg/game.hpp"
#include "nsdg/io.hpp"
#include "nsdg/isaacs_pde.hpp"
#include "nsdg/suites.hpp"

namespace nsdg {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <class T>
T take(const nlohmann::json& j, const char* key, const char* where) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(where) + ": bad value for '" + key + "': " + e.what());
  }
}

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

void add_verdict(RunReport& rep, const std::string& check, const std::string& verdict) {
  rep.verdicts.emplace_back(check, verdict);
  if (verdict == "FAIL") rep.exit_code = std::max(rep.exit_code, kExitFail);
  if (verdict == "INCONCLUSIVE") rep.exit_code = std::max(rep.exit_code, kExitPrecondition);
}

std::string emit_json(RunReport& rep, const std::string& dir, const std::string& name, const nlohmann::json& j) {
  const std::string path = (fs::path(dir) / name).string();
  write_json_file(path, j);
  rep.files.push_back(name);
  return path;
}

// Writes the run report itself; it lists its own name. Paths are relative to
// the output directory so reports do not depend on where they were written.
void emit_report(RunReport& rep, const std::string& dir, const std::string& name) {
  const std::string path = (fs::path(dir) / name).string();
  rep.files.push_back(name);
  write_json_file(path, rep.to_json());
}

RunReport start(const RunConfig& cfg, const std::string& command, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + out_dir + "': " + ec.message());
  RunReport rep;
  rep.command = command;
  rep.digest = cfg.digest;
  rep.body["spec"] = cfg.spec.name;
  rep.body["numerics"] = cfg.numerics.to_json();
  return rep;
}

SpaceGrid config_grid(const RunConfig& cfg) { return SpaceGrid(cfg.numerics.x_min, cfg.numerics.x_max, cfg.numerics.J); }

// PDE time steps: the configured count, else the smallest feasible one.
int pde_steps(const RunConfig& cfg, const SpaceGrid& grid) {
  return cfg.numerics.pde_M > 0 ? cfg.numerics.pde_M : cfl_min_steps(cfg.spec, grid, 0.0);
}

MarkovTree config_tree(const RunConfig& cfg) {
  return MarkovTree(cfg.spec, TimeGrid(0.0, cfg.spec.T, cfg.numerics.M), cfg.spec.lambda, cfg.numerics.x0);
}

void require_isaacs(const GameSpec& spec) {
  const IsaacsGapReport gap = isaacs_gap(spec);
  if (!gap.isaacs()) {
    std::ostringstream os;
    os << "Isaacs condition fails: gap_lower " << fmt_num(gap.gap_lower) << ", gap_upper " << fmt_num(gap.gap_upper)
       << " over " << gap.samples << " samples";
    throw PreconditionError(os.str(), gap.to_json());
  }
}

void require_bound(const GameSpec& spec) {
  if (!spec.coefficient_bound)
    throw PreconditionError("the Nash construction requires a declared coefficient_bound");
}

FieldSet nash_fields(const RunConfig& cfg, const MarkovTree& tree, nlohmann::json& info) {
  const Numerics& n = cfg.numerics;
  info["source"] = n.nash_fields;
  if (n.nash_fields == "tree")
    return FieldSet::from_tree(tree, tree_value(cfg.spec, tree, {false, 1}), tree_value(cfg.spec, tree, {false, 2}));
  const SpaceGrid grid = config_grid(cfg);
  int total = pde_steps(cfg, grid);
  if (n.pde_M > 0 && n.pde_M % n.M != 0)
    throw ConfigError("numerics: pde_M (" + std::to_string(n.pde_M) + ") must be a multiple of M (" +
                      std::to_string(n.M) + ") for PDE Nash fields");
  const int per = (total + n.M - 1) / n.M;
  total = per * n.M;
  const TimeGrid time(0.0, cfg.spec.T, total);
  info["pde_M"] = total;
  info["J"] = grid.J;
  return FieldSet::from_pde(solve_coupled_isaacs(cfg.spec, grid, time, {false, 1}),
                            solve_coupled_isaacs(cfg.spec, grid, time, {false, 2}), per);
}

nlohmann::json pair_json(const MarkovTree& tree, const TreeControls& c) {
  return {{"M", tree.M()}, {"x0", tree.x0()}, {"u", c.u}, {"v", c.v}};
}

// {"constant": {"u": iu, "v": iv}} or full node tables {"M", "x0", "u", "v"}.
TreeControls load_pair(const std::string& path, const GameSpec& spec, const MarkovTree& tree) {
  if (path.empty()) throw ConfigError("nash check needs --pair");
  if (!fs::exists(path)) throw ConfigError("pair file not found: " + path);
  nlohmann::json j;
  try {
    j = read_json_file(path);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  const int nu = static_cast<int>(spec.U.size()), nv = static_cast<int>(spec.V.size());
  auto check_index = [&](int iu, int iv) {
    if (iu < 0 || iu >= nu || iv < 0 || iv >= nv)
      throw ConfigError(path + ": control index out of range (" + std::to_string(iu) + ", " + std::to_string(iv) + ")");
  };
  if (j.contains("constant")) {
    const nlohmann::json& c = j.at("constant");
    const int iu = take<int>(c, "u", path.c_str()), iv = take<int>(c, "v", path.c_str());
    check_index(iu, iv);
    return TreeControls::constant(tree, iu, iv);
  }
  const int M = take<int>(j, "M", path.c_str());
  const double x0 = take<double>(j, "x0", path.c_str());
  if (M != tree.M() || x0 != tree.x0())
    throw ConfigError(path + ": pair was built for M = " + std::to_string(M) + ", x0 = " + fmt_num(x0) +
                      "; the config has M = " + std::to_string(tree.M()) + ", x0 = " + fmt_num(tree.x0()));
  TreeControls c;
  c.u = take<std::vector<int>>(j, "u", path.c_str());
  c.v = take<std::vector<int>>(j, "v", path.c_str());
  if (c.u.size() != tree.node_count() || c.v.size() != tree.node_count())
    throw ConfigError(path + ": expected " + std::to_string(tree.node_count()) + " entries in 'u' and 'v'");
  for (std::size_t a = 0; a < c.u.size(); ++a) check_index(c.u[a], c.v[a]);
  return c;
}

nlohmann::json suite_body(const SuiteReport& s) { return s.to_json(); }

int regularity_J(const GameSpec& spec, const Numerics& n) {
  int J = 10;
  while (J < 400 && cfl_min_steps(spec, SpaceGrid(n.x_min, n.x_max, J + 1), 0.0) <= n.regularity_M.front()) ++J;
  return J;
}

}  // namespace

nlohmann::json Numerics::to_json() const {
  return {{"M", M},
          {"J", J},
          {"x_min", x_min},
          {"x_max", x_max},
          {"scenario_count", scenario_count},
          {"seed", seed},
          {"regression_degree", regression_degree},
          {"epsilon_schedule", epsilon_schedule},
          {"cell_size", cell_size},
          {"x0", x0},
          {"pde_M", pde_M},
          {"nash_fields", nash_fields},
          {"refine_J0", refine_J0},
          {"refine_levels", refine_levels},
          {"regularity_M", regularity_M}};
}

Numerics numerics_from_json(const nlohmann::json& j, Numerics n) {
  static const char* kWhere = "numerics";
  if (!j.is_object()) throw ConfigError("numerics: expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "M") n.M = take<int>(j, "M", kWhere);
    else if (k == "J") n.J = take<int>(j, "J", kWhere);
    else if (k == "x_min") n.x_min = take<double>(j, "x_min", kWhere);
    else if (k == "x_max") n.x_max = take<double>(j, "x_max", kWhere);
    else if (k == "scenario_count") n.scenario_count = take<int>(j, "scenario_count", kWhere);
    else if (k == "seed") n.seed = take<std::uint64_t>(j, "seed", kWhere);
    else if (k == "regression_degree") n.regression_degree = take<int>(j, "regression_degree", kWhere);
    else if (k == "epsilon_schedule") n.epsilon_schedule = take<std::vector<double>>(j, "epsilon_schedule", kWhere);
    else if (k == "cell_size") n.cell_size = take<double>(j, "cell_size", kWhere);
    else if (k == "x0") n.x0 = take<double>(j, "x0", kWhere);
    else if (k == "pde_M") n.pde_M = take<int>(j, "pde_M", kWhere);
    else if (k == "nash_fields") n.nash_fields = take<std::string>(j, "nash_fields", kWhere);
    else if (k == "refine_J0") n.refine_J0 = take<int>(j, "refine_J0", kWhere);
    else if (k == "refine_levels") n.refine_levels = take<int>(j, "refine_levels", kWhere);
    else if (k == "regularity_M") n.regularity_M = take<std::vector<int>>(j, "regularity_M", kWhere);
    else throw ConfigError("numerics: unknown key '" + k + "'");
  }
  auto positive = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("numerics: ") + what);
  };
  positive(n.M > 0, "M must be positive");
  positive(n.J >= 3, "J must be at least 3");
  positive(n.x_min < n.x_max, "x_min must be below x_max");
  positive(n.scenario_count > 0, "scenario_count must be positive");
  positive(n.regression_degree > 0, "regression_degree must be positive");
  positive(!n.epsilon_schedule.empty(), "epsilon_schedule must not be empty");
  for (double e : n.epsilon_schedule) positive(e > 0.0 && std::isfinite(e), "epsilon_schedule entries must be positive");
  positive(n.cell_size > 0.0, "cell_size must be positive");
  positive(n.x0 >= n.x_min && n.x0 <= n.x_max, "x0 must lie in [x_min, x_max]");
  positive(n.pde_M >= 0, "pde_M must be positive (or 0 for automatic)");
  positive(n.nash_fields == "tree" || n.nash_fields == "pde", "nash_fields must be 'tree' or 'pde'");
  positive(n.refine_J0 >= 3, "refine_J0 must be at least 3");
  positive(n.refine_levels >= 2, "refine_levels must be at least 2");
  positive(n.regularity_M.size() >= 2, "regularity_M needs at least two entries");
  for (int m : n.regularity_M) positive(m > 0, "regularity_M entries must be positive");
  return n;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig load_config(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
  RunConfig cfg;
  cfg.config_path = path;
  nlohmann::json doc;
  try {
    doc = read_json_file(path);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError(path + ": expected a JSON object");
  nlohmann::json spec_doc = doc;
  if (doc.contains("spec")) {
    const fs::path rel = take<std::string>(doc, "spec", path.c_str());
    const fs::path sp = rel.is_absolute() ? rel : fs::path(path).parent_path() / rel;
    cfg.spec_path = sp.string();
    if (!fs::exists(sp)) throw ConfigError(path + ": spec file not found: " + cfg.spec_path);
    try {
      spec_doc = read_json_file(cfg.spec_path);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(cfg.spec_path + ": parse error at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    if (doc.contains("output_dir")) cfg.output_dir = take<std::string>(doc, "output_dir", path.c_str());
  } else {
    cfg.spec_path = path;
  }
  try {
    cfg.spec = spec_from_json(spec_doc);
  } catch (const SpecError& e) {
    throw ConfigError(cfg.spec_path + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(cfg.spec_path + ": " + e.what());
  } catch (const ExprError& e) {
    throw ConfigError(cfg.spec_path + ": " + e.what());
  }
  Numerics n;
  if (spec_doc.contains("numerics")) n = numerics_from_json(spec_doc.at("numerics"), n);
  if (doc.contains("spec") && doc.contains("numerics")) n = numerics_from_json(doc.at("numerics"), n);
  cfg.numerics = n;
  if (n.pde_M > 0 && cfg.spec.state_dim == 1) {
    const int need = cfl_min_steps(cfg.spec, config_grid(cfg), 0.0);
    if (n.pde_M < need)
      throw ConfigError("numerics: pde_M = " + std::to_string(n.pde_M) + " violates the CFL bound for J = " +
                        std::to_string(n.J) + "; suggested M = " + std::to_string(need));
  }
  const nlohmann::json resolved = {{"spec", spec_to_json(cfg.spec)}, {"numerics", n.to_json()}};
  cfg.digest = fnv1a_hex(resolved.dump());
  return cfg;
}

nlohmann::json RunReport::to_json() const {
  nlohmann::json v = nlohmann::json::object();
  for (const auto& [k, s] : verdicts) v[k] = s;
  nlohmann::json j = {{"command", command}, {"config_digest", digest}, {"verdicts", v}, {"files", files},
                      {"exit_code", exit_code}};
  if (!message.empty()) j["message"] = message;
  for (auto it = body.begin(); it != body.end(); ++it) j[it.key()] = it.value();
  return j;
}

const std::vector<std::string>& verify_checks() {
  static const std::vector<std::string> names = {"decouple",   "comparison",  "estimate",   "dpp",
                                                 "semigroup-flow", "regularity", "coincidence", "brute-force"};
  return names;
}

std::vector<double> parse_schedule(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (item.empty() || end == item.c_str() || *end != '\0' || !(v > 0.0) || !std::isfinite(v))
      throw ConfigError("--eps-schedule: '" + item + "' is not a positive number");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("--eps-schedule is empty");
  return out;
}

RunReport run_solve(const RunConfig& cfg, const std::string& out_dir, const std::string& orientation, bool upper) {
  if (orientation != "p1" && orientation != "p2" && orientation != "both")
    throw ConfigError("--orientation must be p1, p2 or both");
  RunReport rep = start(cfg, "solve", out_dir);
  auto t0 = Clock::now();
  const ValidationReport val = validate_spec(cfg.spec);
  rep.timings.emplace_back("validate", seconds_since(t0));
  rep.body["validation"] = val.to_json();
  add_verdict(rep, "validate", verdict_str(val.pass()));
  if (!val.pass()) throw PreconditionError("spec validation failed", val.to_json());

  t0 = Clock::now();
  const IsaacsGapReport gap = isaacs_gap(cfg.spec);
  rep.timings.emplace_back("isaacs_gap", seconds_since(t0));
  rep.body["isaacs"] = gap.to_json();
  rep.body["isaacs"]["holds"] = gap.isaacs();

  const SpaceGrid grid = config_grid(cfg);
  const TimeGrid time(0.0, cfg.spec.T, pde_steps(cfg, grid));
  rep.body["grid"] = {{"J", grid.J}, {"dx", grid.dx()}, {"M", time.M}, {"dt", time.dt()}};

  std::vector<int> favors;
  if (orientation != "p2") favors.push_back(1);
  if (orientation != "p1") favors.push_back(2);
  std::vector<ValueField> fields;
  t0 = Clock::now();
  for (int f : favors) fields.push_back(solve_coupled_isaacs(cfg.spec, grid, time, {false, f}));
  if (upper)
    for (int f : favors) fields.push_back(solve_coupled_isaacs(cfg.spec, grid, time, {true, f}));
  rep.timings.emplace_back("solve", seconds_since(t0));

  nlohmann::json solved = nlohmann::json::array();
  for (std::size_t a = 0; a < fields.size(); ++a) {
    const ValueField& f = fields[a];
    const auto labels = f.orientation.labels();
    solved.push_back({{"orientation", f.orientation.name()},
                      {"labels", {labels[0], labels[1]}},
                      {"root_values", {f.interp(0, 0, std::clamp(cfg.numerics.x0, grid.x_min, grid.x_max)),
                                       f.interp(1, 0, std::clamp(cfg.numerics.x0, grid.x_min, grid.x_max))}}});
  }
  rep.body["fields"] = solved;
  if (upper) {
    nlohmann::json diff = nlohmann::json::array();
    for (std::size_t a = 0; a < favors.size(); ++a) {
      const ValueField& w = fields[a];
      const ValueField& u = fields[a + favors.size()];
      double d = 0.0;
      for (int c = 0; c < 2; ++c)
        for (std::size_t n = 0; n < w.W[c].size(); ++n) d = std::max(d, std::fabs(u.W[c][n] - w.W[c][n]));
      diff.push_back({{"favor", favors[a]}, {"sup_upper_minus_lower", d}});
    }
    rep.body["upper_vs_lower"] = diff;
  }

  std::vector<const ValueField*> ptrs;
  for (const auto& f : fields) ptrs.push_back(&f);
  std::ostringstream csv;
  write_fields_csv(csv, ptrs);
  const std::string csv_path = (fs::path(out_dir) / "fields.csv").string();
  write_text_file(csv_path, csv.str());
  rep.files.push_back("fields.csv");
  emit_report(rep, out_dir, "solve.json");
  return rep;
}

RunReport run_verify(const RunConfig& cfg, const std::string& out_dir, const std::string& check,
                     std::optional<int> seeds) {
  const auto& names = verify_checks();
  if (std::find(names.begin(), names.end(), check) == names.end())
    throw ConfigError("unknown check '" + check + "'; valid checks: " + join(names, ", "));
  if (seeds && *seeds <= 0) throw ConfigError("--seeds must be positive");
  RunReport rep = start(cfg, "verify " + check, out_dir);
  const GameSpec& spec = cfg.spec;
  const Numerics& n = cfg.numerics;
  const auto t0 = Clock::now();
  nlohmann::json result;
  std::string verdict;

  if (check == "decouple" || check == "semigroup-flow") {
    const MarkovTree tree = config_tree(cfg);
    const int count = seeds.value_or(check == "decouple" ? 10 : 5);
    double worst = 0.0;
    std::size_t checked = 0;
    for (int s = 0; s < count; ++s) {
      const TreeControls ctl = random_tree_controls(spec, tree, n.seed + static_cast<std::uint64_t>(s));
      if (check == "decouple") {
        const DecoupleReport d = decouple_check(spec, tree, ctl);
        worst = std::max(worst, d.max_discrepancy);
        checked += d.nodes_checked;
      } else {
        const FlowReport f = semigroup_flow_check(spec, tree, ctl);
        worst = std::max(worst, f.max_error);
        checked += f.triples;
      }
    }
    const double tol = check == "decouple" ? 1e-9 : 1e-12;
    verdict = verdict_str(worst <= tol);
    result = {{"check", check},
              {"statistic", check == "decouple" ? "max_nodewise_discrepancy" : "max_abs_composition_error"},
              {"value", worst},
              {"tolerance", tol},
              {"control_tables", count},
              {check == "decouple" ? "nodes_checked" : "triples", checked},
              {"M", n.M},
              {"x0", n.x0}};
  } else if (check == "comparison" || check == "estimate" || check == "brute-force") {
    SuiteReport s;
    if (check == "comparison") s = comparison_suite(seeds.value_or(200), n.seed);
    else if (check == "estimate") s = estimate_suite(seeds.value_or(100), n.seed);
    else s = brute_force_suite(seeds.value_or(100), n.seed);
    verdict = verdict_str(s.pass);
    result = suite_body(s);
  } else if (check == "dpp") {
    DppOptions opt;
    opt.x_min = n.x_min;
    opt.x_max = n.x_max;
    opt.J0 = n.refine_J0;
    opt.levels = n.refine_levels;
    const DppReport d = dpp_check(spec, opt);
    verdict = d.verdict;
    result = d.to_json();
  } else if (check == "coincidence") {
    std::vector<SpaceGrid> grids;
    std::vector<int> Ms;
    int M0 = 0;
    for (int l = 0; l < n.refine_levels; ++l) {
      const SpaceGrid g(n.x_min, n.x_max, (n.refine_J0 + 1) * (1 << l) - 1);
      if (l == 0) M0 = cfl_min_steps(spec, g, 0.0);
      grids.push_back(g);
      Ms.push_back(M0 << (2 * l));
    }
    const CoincidenceReport c = coincidence_check(spec, 0.0, grids, Ms);
    verdict = c.verdict;
    result = c.to_json();
  } else {  // regularity
    const SpaceGrid grid(n.x_min, n.x_max, regularity_J(spec, n));
    result = nlohmann::json::object();
    bool ok = true;
    for (int favor = 1; favor <= 2; ++favor) {
      const RegularityReport r = field_regularity_check(spec, 0.0, grid, n.regularity_M, {false, favor});
      ok = ok && r.verdict == "PASS";
      result[favor == 1 ? "p1" : "p2"] = r.to_json();
    }
    result["J"] = grid.J;
    verdict = verdict_str(ok);
  }
  rep.timings.emplace_back(check, seconds_since(t0));
  rep.body["result"] = result;
  add_verdict(rep, check, verdict);
  emit_report(rep, out_dir, "verify_" + check + ".json");
  return rep;
}

RunReport run_nash(const RunConfig& cfg, const std::string& out_dir, const std::string& mode,
                   const std::string& pair_path, const std::optional<std::vector<double>>& schedule) {
  if (mode != "find" && mode != "check") throw ConfigError("nash mode must be 'find' or 'check'");
  const GameSpec& spec = cfg.spec;
  if (mode == "find") require_isaacs(spec);
  require_bound(spec);
  const MarkovTree tree = config_tree(cfg);
  TreeControls pair;
  if (mode == "check") pair = load_pair(pair_path, spec, tree);
  RunReport rep = start(cfg, "nash " + mode, out_dir);
  const std::vector<double> eps = schedule.value_or(cfg.numerics.epsilon_schedule);
  NashCheckOptions opt;
  opt.scenarios = cfg.numerics.scenario_count;
  opt.seed = cfg.numerics.seed;

  auto t0 = Clock::now();
  nlohmann::json field_info;
  const FieldSet fields = nash_fields(cfg, tree, field_info);
  rep.timings.emplace_back("fields", seconds_since(t0));
  rep.body["fields"] = field_info;
  rep.body["lattice"] = {{"M", tree.M()}, {"x0", tree.x0()}, {"cell_size", tree.h()},
                         {"requested_cell_size", cfg.numerics.cell_size}};
  rep.body["epsilon_schedule"] = eps;

  t0 = Clock::now();
  if (mode == "find") {
    const NashPayoff p = extract_nash_payoff(spec, tree, fields, eps, opt);
    rep.timings.emplace_back("extract", seconds_since(t0));
    rep.body["payoff"] = p.to_json();
    const auto best = std::find_if(p.certificates.begin(), p.certificates.end(),
                                   [&](const NashCertificate& c) { return c.epsilon == p.epsilon; });
    if (best != p.certificates.end()) emit_json(rep, out_dir, "certificate.json", best->to_json());
    emit_json(rep, out_dir, "pair.json", pair_json(tree, p.pair.controls));
    add_verdict(rep, "nash", verdict_str(p.pass));
  } else {
    nlohmann::json certs = nlohmann::json::array();
    std::vector<double> sorted = eps;
    std::sort(sorted.begin(), sorted.end());
    NashCertificate smallest;
    for (std::size_t a = 0; a < sorted.size(); ++a) {
      const NashCertificate c = nash_characterization_check(spec, tree, pair, sorted[a], fields, opt);
      if (a == 0) smallest = c;
      certs.push_back(c.to_json());
    }
    rep.timings.emplace_back("check", seconds_since(t0));
    rep.body["certificates"] = certs;
    rep.body["pair"] = fs::path(pair_path).filename().string();
    emit_json(rep, out_dir, "certificate.json", smallest.to_json());
    add_verdict(rep, "nash", verdict_str(smallest.pass));
  }
  emit_report(rep, out_dir, "nash.json");
  return rep;
}

RunReport run_report(const std::string& dir) {
  if (dir.empty()) throw ConfigError("report needs --dir");
  if (!fs::is_directory(dir)) throw ConfigError("report directory not found: " + dir);
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(dir)) {
    const fs::path& p = e.path();
    if (p.extension() == ".json" && p.filename() != "summary.json") paths.push_back(p);
  }
  std::sort(paths.begin(), paths.end());
  RunReport rep;
  rep.command = "report";
  nlohmann::json runs = nlohmann::json::array();
  std::ostringstream csv;
  csv << "file,command,check,verdict,config_digest\n";
  for (const fs::path& p : paths) {
    nlohmann::json j;
    try {
      j = read_json_file(p.string());
    } catch (const std::exception&) {
      continue;
    }
    if (!j.is_object() || !j.contains("command") || !j.contains("verdicts")) continue;
    const std::string file = p.filename().string();
    const std::string command = j.at("command").get<std::string>();
    const std::string digest = j.value("config_digest", "");
    runs.push_back({{"file", file}, {"command", command}, {"config_digest", digest}, {"verdicts", j.at("verdicts")}});
    for (auto it = j.at("verdicts").begin(); it != j.at("verdicts").end(); ++it) {
      const std::string v = it.value().get<std::string>();
      csv << csv_quote(file) << ',' << csv_quote(command) << ',' << csv_quote(it.key()) << ',' << v << ','
          << digest << '\n';
      add_verdict(rep, file + ":" + it.key(), v);
    }
  }
  rep.body["runs"] = runs;
  const std::string csv_path = (fs::path(dir) / "summary.csv").string();
  write_text_file(csv_path, csv.str());
  rep.files.push_back("summary.csv");
  emit_report(rep, dir, "summary.json");
  return rep;
}

RunReport run_command(const Invocation& inv) {
  RunReport rep;
  rep.command = inv.command;
  try {
    if (inv.command == "report") return run_report(inv.dir);
    if (inv.command != "solve" && inv.command != "verify" && inv.command != "nash")
      throw ConfigError("unknown command '" + inv.command + "'; valid commands: solve, verify, nash, report");
    if (inv.config.empty()) throw ConfigError("--config is required");
    const RunConfig cfg = load_config(inv.config);
    std::string out = "nsdg_out";
    if (!cfg.output_dir.empty()) out = cfg.output_dir;
    if (const char* env = std::getenv(kOutDirVariable); env && *env) out = env;
    if (inv.out_dir) out = *inv.out_dir;
    rep.digest = cfg.digest;
    if (inv.command == "solve") return run_solve(cfg, out, inv.orientation, inv.upper);
    if (inv.command == "verify") return run_verify(cfg, out, inv.check, inv.seeds);
    return run_nash(cfg, out, inv.mode, inv.pair, inv.eps_schedule);
  } catch (const ConfigError& e) {
    rep.exit_code = kExitUsage;
    rep.message = e.what();
  } catch (const PreconditionError& e) {
    rep.exit_code = kExitPrecondition;
    rep.message = e.what();
    rep.body["precondition"] = e.detail;
  } catch (const PdeError& e) {
    rep.exit_code = e.suggested_M > 0 ? kExitUsage : kExitPrecondition;
    rep.message = e.what();
    if (e.suggested_M > 0) rep.body["suggested_M"] = e.suggested_M;
  } catch (const GameError& e) {
    rep.exit_code = kExitPrecondition;
    rep.message = e.what();
  } catch (const DynamicsError& e) {
    rep.exit_code = kExitPrecondition;
    rep.message = e.what();
  } catch (const BsdeError& e) {
    rep.exit_code = kExitPrecondition;
    rep.message = e.what();
  } catch (const SpecError& e) {
    rep.exit_code = kExitUsage;
    rep.message = e.what();
  }
  return rep;
}

}  // namespace nsdg
