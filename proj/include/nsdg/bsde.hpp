#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "nsdg/dynamics.hpp"
#include "nsdg/model.hpp"

namespace nsdg {

// compensated: Y = E + Δ(f − λH), the form of the regime-decoupled cost BSDE.
// plain:       Y = E + Δ g, a generic generator g(t, y, z, k).
enum class JumpForm { compensated, plain };

struct DriverPoint {
  int k = 0;
  double t = 0.0;
  std::span<const double> x;
  double y = 0.0;
  double h = 0.0;
  std::span<const double> z;
  double u = 0.0;
  double v = 0.0;
  int regime = 1;
  std::size_t node = 0;  // tree node id, or scenario index in regression mode
};

using DriverFn = std::function<double(const DriverPoint&)>;
// Terminal data at a final node: (x, regime, node id or scenario).
using TerminalFn = std::function<double(std::span<const double> x, int regime, std::size_t node)>;

// Control indices into U and V for every tree node.
struct TreeControls {
  std::vector<int> u;
  std::vector<int> v;
  static TreeControls constant(const MarkovTree& tree, int iu, int iv);
};

struct BsdeProblem {
  DriverFn driver;
  TerminalFn terminal;
  int start_regime = 1;  // regime at parity 0
  JumpForm form = JumpForm::compensated;
  // Tree mode.
  const MarkovTree* tree = nullptr;
  const TreeControls* controls = nullptr;
  // Regression mode; `spec` maps the path's control indices to values.
  const GameSpec* spec = nullptr;
  const ScenarioBundle* scenarios = nullptr;
  const StatePath* path = nullptr;
  int degree = 3;
};

struct BsdeSolution {
  std::string mode;  // "tree" or "regression"
  std::string component;
  int M = 0;
  int d = 1;
  int S = 0;  // regression only
  std::vector<double> Y, H, Z;  // tree: by node id; regression: by k*S + s
  int picard_iterations = 1;
  double ridge = 0.0;       // largest ridge regularizer used (regression)
  double root_se = 0.0;     // standard error of the root value (regression)

  double root() const { return Y.at(0); }
  double Zc(std::size_t at, int c) const { return Z[at * static_cast<std::size_t>(d) + c]; }
};

class BsdeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Result of one backward step at a tree node.
struct StepResult {
  double Y = 0.0;
  double Ystar = 0.0;
  double E = 0.0;
  double Ybar = 0.0;  // predictor argument
  double H = 0.0;
  std::array<double, 3> Z{};
};

// One backward step from the six children of a node: `nj` are the no-jump
// children values (offsets -1, 0, +1), `jp` the jumped ones. `f(y, h, z)`.
template <class F>
StepResult tree_step(const Transition& tr, double q, double dt, double lambda, const double* nj, const double* jp,
                     int d, JumpForm form, F&& f) {
  StepResult r;
  const double yn = nj[1] + tr.p[0] * (nj[0] - nj[1]) + tr.p[2] * (nj[2] - nj[1]);
  const double yj = jp[1] + tr.p[0] * (jp[0] - jp[1]) + tr.p[2] * (jp[2] - jp[1]);
  r.H = yj - yn;
  if (tr.sigma_norm2 > 1e-28) {
    const double s = tr.p[0] * (nj[0] - nj[1]) * tr.dev[0] + tr.p[2] * (nj[2] - nj[1]) * tr.dev[2];
    for (int c = 0; c < d; ++c) r.Z[static_cast<std::size_t>(c)] = tr.sigma[static_cast<std::size_t>(c)] * s / (tr.sigma_norm2 * dt);
  }
  r.E = yn + q * r.H;
  std::span<const double> z(r.Z.data(), static_cast<std::size_t>(d));
  if (form == JumpForm::compensated) {
    r.Ybar = yn;
    r.Ystar = r.E + dt * (f(r.Ybar, r.H, z) - lambda * r.H);
    r.Y = r.E + dt * (f(r.Ystar, r.H, z) - lambda * r.H);
  } else {
    r.Ybar = r.E;
    r.Ystar = r.E + dt * f(r.Ybar, r.H, z);
    r.Y = r.E + dt * f(r.Ystar, r.H, z);
  }
  return r;
}

// Gathers the six child values of node (k, j, parity) from level-(k+1) data
// indexed by node id; `jump_src` supplies the parity-flipped children.
void gather_children(const std::vector<double>& no_jump_src, const std::vector<double>& jump_src, int k, int j,
                     int parity, double* nj, double* jp);

BsdeSolution solve_tree(const BsdeProblem& problem);
BsdeSolution solve_regression(const BsdeProblem& problem);

// Backward solve on levels [k1, k2] with terminal values `eta` on level k2
// (indexed by position within the level, i.e. node_id - level_offset(k2)).
BsdeSolution solve_tree_range(const BsdeProblem& problem, int k1, int k2, const std::vector<double>* eta);

// Driver and terminal of the regime-indexed decoupled cost BSDE for start i.
BsdeProblem decoupled_problem(const GameSpec& spec, const MarkovTree& tree, const TreeControls& controls, int i);

std::array<BsdeSolution, 2> solve_coupled(const GameSpec& spec, const MarkovTree& tree, const TreeControls& controls);

struct DecoupleReport {
  double max_discrepancy = 0.0;
  std::size_t nodes_checked = 0;
  bool pass(double tol = 1e-9) const { return max_discrepancy <= tol; }
  nlohmann::json to_json() const;
};
DecoupleReport decouple_check(const GameSpec& spec, const MarkovTree& tree, const TreeControls& controls);

// Values at level k1 of the decoupled BSDE started from `eta` at level k2.
std::vector<double> semigroup_apply(const GameSpec& spec, const MarkovTree& tree, const TreeControls& controls,
                                    int k1, int k2, const std::vector<double>& eta, int i);

enum class Verdict { pass, fail, inconclusive };
const char* verdict_name(Verdict v);

struct ComparisonReport {
  Verdict verdict = Verdict::pass;
  std::size_t violations = 0;
  double min_gap = 0.0;  // min over nodes of Y1 - Y2
  double root_gap = 0.0;
  std::string precondition;  // first failed precondition, if any
  nlohmann::json to_json() const;
};
// Both problems on the same tree and controls. `K` is the declared jump slope.
ComparisonReport comparison_check(const BsdeProblem& p1, const BsdeProblem& p2, double K, double tol = 1e-10);

struct EstimateReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double beta = 0.0;
  bool pass = true;
  nlohmann::json to_json() const;
};
// Problem i uses driver base.driver + phi_i(node) and terminal_i; C is the
// generator's Lipschitz constant in (y, z, k).
EstimateReport stability_estimate_check(const BsdeProblem& base, const TerminalFn& terminal1,
                                        const TerminalFn& terminal2, const std::function<double(std::size_t)>& phi1,
                                        const std::function<double(std::size_t)>& phi2, double C,
                                        double tol = 1e-10);

// Probability of every node under the controlled chain.
std::vector<double> node_probabilities(const MarkovTree& tree, const TreeControls& controls);

void write_solution_csv(std::ostream& os, const BsdeSolution& sol, const MarkovTree* tree, const StatePath* path,
                        int start_regime);

}  // namespace nsdg
