#pragma once

// Configuration loading, command orchestration and report emission.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nsdg/model.hpp"

namespace nsdg {

// Usage or configuration problems; exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A check could not run because its prerequisite fails; exit code 3.
class PreconditionError : public std::runtime_error {
 public:
  PreconditionError(const std::string& what, nlohmann::json detail = nlohmann::json::object())
      : std::runtime_error(what), detail(std::move(detail)) {}
  nlohmann::json detail;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitPrecondition = 3;

struct Numerics {
  int M = 16;  // tree / game steps
  int J = 80;  // interior PDE nodes
  double x_min = -4.0;
  double x_max = 4.0;
  int scenario_count = 10000;
  std::uint64_t seed = 1;
  int regression_degree = 3;
  std::vector<double> epsilon_schedule = {0.2, 0.1, 0.05};
  double cell_size = 0.1;
  double x0 = 0.0;       // tree root
  int pde_M = 0;         // 0: smallest CFL-feasible count
  std::string nash_fields = "tree";  // tree | pde
  int refine_J0 = 40;    // coarsest grid of the dpp / coincidence ladders
  int refine_levels = 3;
  std::vector<int> regularity_M = {64, 128, 256};
  nlohmann::json to_json() const;
};

// Reads a numerics block over `base`; unknown keys are rejected.
Numerics numerics_from_json(const nlohmann::json& j, Numerics base = {});

struct RunConfig {
  std::string config_path;
  std::string spec_path;
  GameSpec spec;
  Numerics numerics;
  std::string output_dir;
  std::string digest;  // FNV-1a of the canonical resolved document
};

// A config is either a run document {"spec": path, "numerics": {...},
// "output_dir": dir} or a game spec document with an optional "numerics" block.
RunConfig load_config(const std::string& path);

// 64-bit FNV-1a, printed as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

struct RunReport {
  std::string command;
  std::string digest;
  std::vector<std::pair<std::string, std::string>> verdicts;  // check -> PASS | FAIL | INCONCLUSIVE
  std::vector<std::string> files;
  std::vector<std::pair<std::string, double>> timings;  // seconds; kept out of the JSON
  nlohmann::json body = nlohmann::json::object();
  int exit_code = kExitOk;
  std::string message;
  nlohmann::json to_json() const;
};

struct Invocation {
  std::string command;  // solve | verify | nash | report
  std::string config;
  std::string orientation = "both";  // p1 | p2 | both
  bool upper = false;
  std::string check;
  std::optional<int> seeds;
  std::string mode;  // find | check
  std::string pair;
  std::optional<std::vector<double>> eps_schedule;
  std::string dir;
  std::optional<std::string> out_dir;  // beats NSDG_OUT_DIR and the config
};

inline constexpr const char* kOutDirVariable = "NSDG_OUT_DIR";

const std::vector<std::string>& verify_checks();

RunReport run_solve(const RunConfig& cfg, const std::string& out_dir, const std::string& orientation, bool upper);
RunReport run_verify(const RunConfig& cfg, const std::string& out_dir, const std::string& check,
                     std::optional<int> seeds);
RunReport run_nash(const RunConfig& cfg, const std::string& out_dir, const std::string& mode,
                   const std::string& pair_path, const std::optional<std::vector<double>>& schedule);
RunReport run_report(const std::string& dir);

// Loads the config, resolves the output directory, dispatches and maps
// exceptions onto exit codes.
RunReport run_command(const Invocation& inv);

// Parses "a,b,c" into positive numbers.
std::vector<double> parse_schedule(const std::string& text);

}  // namespace nsdg
