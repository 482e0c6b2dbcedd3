#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsdg/model.hpp"

namespace nsdg {

class DynamicsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TimeGrid {
  double t0 = 0.0;
  double T = 1.0;
  int M = 1;

  TimeGrid() = default;
  TimeGrid(double t0_, double T_, int M_);
  double dt() const { return (T - t0) / M; }
  double tau(int k) const { return k == M ? T : t0 + k * dt(); }
};

// Counter-based generator: the stream for (seed, scenario, step) is a pure
// function of the triple, so draws do not depend on generation order.
class CounterRng {
 public:
  using result_type = std::uint64_t;
  CounterRng(std::uint64_t seed, std::uint64_t scenario, std::uint64_t step);
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();
  double uniform();  // in [0, 1)

 private:
  std::uint64_t state_;
};

struct ScenarioBundle {
  TimeGrid grid;
  double lambda = 0.0;
  int S = 0;
  int d = 1;
  std::uint64_t seed = 0;
  std::vector<double> dB;  // S x M x d
  std::vector<int> dN;     // S x M

  const double* dB_at(int s, int k) const {
    return dB.data() + (static_cast<std::size_t>(s) * grid.M + k) * d;
  }
  int dN_at(int s, int k) const { return dN[static_cast<std::size_t>(s) * grid.M + k]; }
};

// Warnings go to `warn` when non-null (λΔ ≥ 1).
ScenarioBundle sample_scenarios(const TimeGrid& grid, double lambda, int S, std::uint64_t seed, int brownian_dim = 1,
                                std::ostream* warn = nullptr);

// One-step law of the lattice chain at a node for a control pair.
struct Transition {
  std::array<double, 3> p{};       // offsets -1, 0, +1
  std::array<double, 3> dev{};     // m*h - mu: state increment minus bΔ
  double mean = 0.0;               // bΔ
  double sigma_norm2 = 0.0;        // |σ|²
  std::array<double, 3> sigma{};   // σ row (one entry per Brownian dimension)
  bool adjusted = false;           // moment fallback used
};

// Recombining lattice: node (k, j, parity) sits at x0 + k Δ b_ref + j h, |j| ≤ k.
class MarkovTree {
 public:
  MarkovTree(const GameSpec& spec, const TimeGrid& grid, double lambda, double x0);

  const GameSpec& spec() const { return *spec_; }
  const TimeGrid& grid() const { return grid_; }
  int M() const { return grid_.M; }
  double dt() const { return grid_.dt(); }
  double lambda() const { return lambda_; }
  double q() const { return q_; }
  double x0() const { return x0_; }
  double h() const { return h_; }
  double drift_ref() const { return b_ref_; }
  double sigma_ref() const { return sigma_ref_; }

  static int width(int k) { return 2 * k + 1; }
  // Node ids: level k occupies [2k², 2(k+1)²); parity is the low bit.
  static std::size_t level_offset(int k) { return 2U * static_cast<std::size_t>(k) * static_cast<std::size_t>(k); }
  static std::size_t node_id(int k, int j, int parity) {
    return level_offset(k) + 2U * static_cast<std::size_t>(j + k) + static_cast<std::size_t>(parity);
  }
  std::size_t node_count() const { return level_offset(grid_.M + 1); }
  std::size_t level_size(int k) const { return 2U * static_cast<std::size_t>(width(k)); }

  double x(int k, int j) const { return x0_ + k * grid_.dt() * b_ref_ + j * h_; }
  double center(int k) const { return x0_ + k * grid_.dt() * b_ref_; }
  // Whether (k, ·, parity) can be reached with positive probability.
  bool parity_reachable(int k, int parity) const { return parity == 0 || (k > 0 && q_ > 0.0); }

  Transition transition(int k, double x, double u, double v) const;
  Transition transition_at(int k, double x, int iu, int iv) const {
    return transition(k, x, spec_->U[static_cast<std::size_t>(iu)], spec_->V[static_cast<std::size_t>(iv)]);
  }

  // Events where the moment-matched weights left [0,1] (counted lazily).
  std::size_t adjusted_count() const { return adjusted_; }

 private:
  const GameSpec* spec_;
  TimeGrid grid_;
  double lambda_;
  double q_;
  double x0_;
  double h_;
  double b_ref_;
  double sigma_ref_;
  mutable std::size_t adjusted_ = 0;
};

MarkovTree build_tree(const TimeGrid& grid, double lambda, double x0, const GameSpec& spec);

// Control supplier for forward simulation: control index at (scenario, k, state).
using ControlPolicy = std::function<int(int scenario, int k, std::span<const double> x, int parity)>;
ControlPolicy constant_policy(int index);

struct StatePath {
  TimeGrid grid;
  int S = 0;
  int n = 1;
  std::vector<double> X;  // S x (M+1) x n
  std::vector<int> parity;  // S x (M+1): cumulative jump parity
  std::vector<int> u;       // S x M control indices
  std::vector<int> v;

  const double* X_at(int s, int k) const { return X.data() + (static_cast<std::size_t>(s) * (grid.M + 1) + k) * n; }
  int parity_at(int s, int k) const { return parity[static_cast<std::size_t>(s) * (grid.M + 1) + k]; }
  int regime(int i, int s, int k) const { return regime_at(i, parity_at(s, k)); }
};

StatePath simulate_forward(const GameSpec& spec, const ScenarioBundle& sc, const ControlPolicy& u,
                           const ControlPolicy& v, std::span<const double> x0);

void write_path_csv(std::ostream& os, const StatePath& path, const ScenarioBundle& sc);

struct MomentReport {
  double lipschitz_ratio = 0.0;   // E sup |X - X'|² / |x0 - x0'|²
  bool exact_zero_deviation = false;
  double growth_ratio = 0.0;      // E sup |X - x0|² / ((1+|x0|²)(T - t0))
  nlohmann::json to_json() const;
};

MomentReport moment_check(const GameSpec& spec, const ScenarioBundle& sc, const ControlPolicy& u,
                          const ControlPolicy& v, std::span<const double> x0, std::span<const double> x0p);

// Refinement study of moment_check over grids with M, 2M, 4M, ...
struct MomentRefinement {
  std::vector<int> M;
  std::vector<MomentReport> reports;
  bool diverging = false;  // some ratio grew by more than 2x on doubling
  nlohmann::json to_json() const;
};
MomentRefinement moment_refinement(const GameSpec& spec, double t0, const std::vector<int>& Ms, int S,
                                   std::uint64_t seed, const ControlPolicy& u, const ControlPolicy& v,
                                   std::span<const double> x0, std::span<const double> x0p);

}  // namespace nsdg
