#pragma once

// Randomized and golden-spec verification suites built on the module checks.

#include <cstdint>
#include <string>

#include <json.hpp>

#include "nsdg/bsde.hpp"
#include "nsdg/game.hpp"

namespace nsdg {

struct SuiteReport {
  std::string check;
  std::string statistic;
  int instances = 0;
  std::size_t violations = 0;
  std::size_t inconclusive = 0;
  double worst = 0.0;  // the statistic's extreme value over instances
  double tolerance = 0.0;
  std::uint64_t seed = 0;
  std::string note;  // first failed precondition, if any
  bool pass = false;
  nlohmann::json to_json() const;
};

// Coupled vs regime-decoupled tree solutions; M in [2, 6], |U|, |V| <= 3.
SuiteReport decouple_suite(int instances, std::uint64_t seed, double tol = 1e-9);
// Ordered plain-form instances: terminal and driver raised by nonnegative data.
SuiteReport comparison_suite(int instances, std::uint64_t seed, double tol = 1e-10);
// Root-level a priori estimate with β = 2 + 2C + 4C².
SuiteReport estimate_suite(int instances, std::uint64_t seed, double tol = 1e-10);
// tree_value against exhaustive one-step-delayed strategy enumeration.
SuiteReport brute_force_suite(int instances, std::uint64_t seed, double tol = 1e-12);

struct FlowReport {
  double max_error = 0.0;
  std::size_t triples = 0;
  bool pass = false;
  nlohmann::json to_json() const;
};
// ⁱG_{k1,k2} ∘ ⁱG_{k2,k3} against ⁱG_{k1,k3} for all k1 < k2 < k3, both i.
FlowReport semigroup_flow_check(const GameSpec& spec, const MarkovTree& tree, const TreeControls& controls,
                                double tol = 1e-12);

// Random control table, deterministic in the seed.
TreeControls random_tree_controls(const GameSpec& spec, const MarkovTree& tree, std::uint64_t seed);

}  // namespace nsdg
