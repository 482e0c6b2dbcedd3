#pragma once

// Deterministic random instances for the verification suites.

#include <cstdint>
#include <random>
#include <string>

#include <json.hpp>

#include "nsdg/io.hpp"
#include "nsdg/model.hpp"

namespace nsdg::instances {

class InstanceRng {
 public:
  explicit InstanceRng(std::uint64_t seed) : gen_(seed * 0x9E3779B97F4A7C15ULL + 17) {}
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(gen_); }
  int integer(int a, int b) { return std::uniform_int_distribution<int>(a, b)(gen_); }
  std::string num(double a, double b) { return "(" + fmt_num(uniform(a, b)) + ")"; }

 private:
  std::mt19937_64 gen_;
};

inline std::vector<double> control_grid(int n, double lo, double hi) {
  std::vector<double> g;
  for (int i = 0; i < n; ++i) g.push_back(n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (n - 1));
  return g;
}

// Small game with control-dependent coefficients and couplings in both
// components. |U|, |V| <= max_controls. With `monotone` the jump slope of
// both decoupled drivers stays >= 0, so the one-step game operator is
// nondecreasing in the jumped children.
inline nlohmann::json random_game_json(std::uint64_t seed, int max_controls = 3, bool monotone = false) {
  InstanceRng r(seed);
  const int nu = r.integer(1, max_controls), nv = r.integer(1, max_controls);
  nlohmann::json j;
  j["name"] = "random-" + std::to_string(seed);
  j["state_dim"] = 1;
  j["brownian_dim"] = 1;
  j["T"] = r.uniform(0.5, 1.0);
  j["lambda"] = r.uniform(0.2, 1.5);
  j["K"] = 0.0;
  j["lipschitz_bound"] = 4.0;
  j["controls"] = {{"U", control_grid(nu, -1.0, 1.0)}, {"V", control_grid(nv, -1.0, 1.0)}};
  j["drift"] = {r.num(-0.5, 0.5) + " + " + r.num(-0.3, 0.3) + "*x + " + r.num(-0.5, 0.5) + "*u + " +
                r.num(-0.5, 0.5) + "*v"};
  j["diffusion"] = {r.num(0.4, 1.0) + " + " + r.num(-0.2, 0.2) + "*sin(x) + " + r.num(0.0, 0.2) + "*u*u"};
  j["ftilde_1"] = r.num(-1, 1) + "*y1 + " + (monotone ? r.num(0.5, 1) : r.num(0, 1)) + "*y2 + " +
                  (monotone ? r.num(-0.2, 0.2) : r.num(-0.5, 0.5)) + "*z + " + r.num(-1, 1) + "*u*v + " +
                  r.num(-1, 1) + "*tanh(x) + " + (monotone ? r.num(-0.25, 0.25) : r.num(-0.5, 0.5)) +
                  "*tanh(y2)*u";
  j["ftilde_2"] = r.num(0, 1) + "*y1 + " + r.num(-1, 1) + "*y2 + " + (monotone ? r.num(-0.2, 0.2) : r.num(-0.5, 0.5)) + "*z + " + r.num(-1, 1) +
                  "*v - " + r.num(-1, 1) + "*u*u + " + r.num(-1, 1) + "*sin(x)";
  j["Phi_1"] = r.num(-1, 1) + "*x + " + r.num(-1, 1) + "*sin(" + r.num(0.5, 2) + "*x)";
  j["Phi_2"] = r.num(-1, 1) + " + " + r.num(-1, 1) + "*tanh(x)";
  return j;
}

}  // namespace nsdg::instances
