#include <doctest.h>

#include <cmath>
#include <sstream>

#include "nsdg/bsde.hpp"
#include "random_specs.hpp"
#include "support.hpp"

using namespace nsdg;
using nsdg::testing::make_spec;

namespace {

BsdeProblem plain_problem(const MarkovTree& tree, const TreeControls& ctl, DriverFn f, TerminalFn xi) {
  BsdeProblem p;
  p.driver = std::move(f);
  p.terminal = std::move(xi);
  p.form = JumpForm::plain;
  p.tree = &tree;
  p.controls = &ctl;
  return p;
}

TerminalFn const_terminal(double c) {
  return [c](std::span<const double>, int, std::size_t) { return c; };
}

}  // namespace

TEST_CASE("constant martingale and deterministic integral") {
  const GameSpec s = make_spec({{"diffusion", {"1"}}, {"lambda", 0.5}});
  for (int M : {1, 3, 8}) {
    const MarkovTree tree(s, TimeGrid(0.0, 1.0, M), 0.5, 0.0);
    const auto ctl = TreeControls::constant(tree, 0, 0);
    for (JumpForm form : {JumpForm::plain, JumpForm::compensated}) {
      BsdeProblem p = plain_problem(tree, ctl, [](const DriverPoint&) { return 0.0; }, const_terminal(5.0));
      p.form = form;
      const BsdeSolution a = solve_tree(p);
      for (std::size_t id = 0; id < tree.node_count(); ++id) {
        CHECK(a.Y[id] == doctest::Approx(5.0).epsilon(1e-15));
        CHECK(std::fabs(a.H[id]) <= 1e-14);
        CHECK(std::fabs(a.Z[id]) <= 1e-13);
      }
      p.driver = [](const DriverPoint&) { return 1.0; };
      p.terminal = const_terminal(0.0);
      CHECK(solve_tree(p).root() == doctest::Approx(1.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("linear driver converges to the exponential") {
  const GameSpec s = make_spec({{"diffusion", {"1"}}});
  for (int M : {4, 16, 64}) {
    const MarkovTree tree(s, TimeGrid(0.0, 1.0, M), 1.0, 0.0);
    const auto ctl = TreeControls::constant(tree, 0, 0);
    const BsdeProblem p = plain_problem(tree, ctl, [](const DriverPoint& q) { return 0.3 * q.y; }, const_terminal(2.0));
    CHECK(std::fabs(solve_tree(p).root() - 2.0 * std::exp(0.3)) <= 10.0 / M);
  }
}

TEST_CASE("terminal layer is exact and zero-driver plain solutions are martingales") {
  const GameSpec s = make_spec({{"diffusion", {"0.5 + 0.1*sin(x)"}}, {"drift", {"0.2*x"}}});
  const MarkovTree tree(s, TimeGrid(0.0, 1.0, 6), 1.3, 0.1);
  const auto ctl = TreeControls::constant(tree, 0, 0);
  auto xi = [](std::span<const double> x, int r, std::size_t) { return std::sin(3.0 * x[0]) + r; };
  const BsdeSolution sol = solve_tree(plain_problem(tree, ctl, [](const DriverPoint&) { return 0.0; }, xi));
  for (int j = -6; j <= 6; ++j) {
    for (int par = 0; par < 2; ++par) {
      const double x = tree.x(6, j);
      CHECK(sol.Y[MarkovTree::node_id(6, j, par)] == xi({&x, 1}, regime_at(1, par), 0));
    }
  }
  for (int k = 0; k < 6; ++k) {
    for (int j = -k; j <= k; ++j) {
      for (int par = 0; par < 2; ++par) {
        const Transition tr = tree.transition(k, tree.x(k, j), 0.0, 0.0);
        double e = 0.0;
        for (int m = -1; m <= 1; ++m) {
          e += tr.p[m + 1] * ((1 - tree.q()) * sol.Y[MarkovTree::node_id(k + 1, j + m, par)] +
                              tree.q() * sol.Y[MarkovTree::node_id(k + 1, j + m, 1 - par)]);
        }
        CHECK(sol.Y[MarkovTree::node_id(k, j, par)] == doctest::Approx(e).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("lambda*dt >= 1 is refused") {
  const GameSpec s = make_spec({});
  CHECK_THROWS(MarkovTree(s, TimeGrid(0.0, 1.0, 1), 1.0, 0.0));
}

TEST_CASE("coupled solve: zero drivers and the linear ODE system") {
  const GameSpec zero = make_spec({{"diffusion", {"1"}}, {"Phi_1", "x"}, {"Phi_2", "sin(x)"}});
  const MarkovTree t0(zero, TimeGrid(0.0, 1.0, 5), 1.0, 0.0);
  const auto c0 = TreeControls::constant(t0, 0, 0);
  const auto zc = solve_coupled(zero, t0, c0);
  BsdeProblem p1 = decoupled_problem(zero, t0, c0, 1);
  p1.terminal = [&](std::span<const double> x, int, std::size_t) { return zero.terminal(1, x); };
  p1.driver = [](const DriverPoint&) { return 0.0; };
  const BsdeSolution ind = solve_tree(p1);
  // Component 1 at parity-0 nodes is a zero-driver solve with regime-free terminal.
  for (int j = -5; j <= 5; ++j)
    CHECK(zc[0].Y[MarkovTree::node_id(2, std::clamp(j, -2, 2), 0)] ==
          doctest::Approx(ind.Y[MarkovTree::node_id(2, std::clamp(j, -2, 2), 0)]).epsilon(1e-13));

  const GameSpec lin = make_spec({{"lambda", 0.0}, {"ftilde_1", "y2"}, {"ftilde_2", "y1"}, {"Phi_1", "1"}});
  for (int M : {8, 32, 128}) {
    const MarkovTree tree(lin, TimeGrid(0.0, 1.0, M), 0.0, 0.0);
    const auto ctl = TreeControls::constant(tree, 0, 0);
    const auto sol = solve_coupled(lin, tree, ctl);
    CHECK(std::fabs(sol[0].root() - std::cosh(1.0)) <= 10.0 / M);
    CHECK(std::fabs(sol[1].root() - std::sinh(1.0)) <= 10.0 / M);
  }
}

TEST_CASE("coupled one-step tree matches leaf enumeration") {
  const GameSpec s = make_spec({{"diffusion", {"0.8"}}, {"drift", {"0.1"}}, {"lambda", 0.6},
                                {"ftilde_1", "0.5*y1 - 0.3*y2 + 0.2*z + x"}, {"ftilde_2", "0.4*y1*0 + 0.7*y2 + 1"},
                                {"Phi_1", "x*x"}, {"Phi_2", "exp(0.3*x)"}});
  const MarkovTree tree(s, TimeGrid(0.0, 1.0, 1), 0.6, 0.2);
  const auto ctl = TreeControls::constant(tree, 0, 0);
  const auto sol = solve_coupled(s, tree, ctl);
  const Transition tr = tree.transition(0, 0.2, 0.0, 0.0);
  const double q = tree.q(), dt = 1.0, x = 0.2, lam = 0.6;
  double A[2] = {0, 0}, P[2] = {0, 0}, Zs = 0.0;
  for (int m = 0; m < 3; ++m) {
    const double xl = tree.x(1, m - 1);
    for (int c = 0; c < 2; ++c) {
      A[c] += tr.p[m] * s.terminal1d(c + 1, xl);
      P[c] += tr.p[m] * s.terminal1d(c + 1, xl);  // terminal data are parity-free
    }
    Zs += tr.p[m] * s.terminal1d(1, xl) * tr.dev[m];
  }
  const double z = 0.8 * Zs / (0.64 * dt);
  // H~ vanishes since terminal data do not depend on parity.
  const double ys1 = A[0] + dt * (s.f1d(1, 0.0, x, A[0], P[1], {&z, 1}, 0, 0));
  const double y1 = A[0] + dt * (s.f1d(1, 0.0, x, ys1, ys1 + P[1] - A[0], {&z, 1}, 0, 0));
  CHECK(sol[0].root() == doctest::Approx(y1).epsilon(1e-13));
  (void)q;
  (void)lam;
}

TEST_CASE("decoupling identity") {
  const GameSpec zero = make_spec({{"diffusion", {"1"}}, {"Phi_1", "x"}});
  const MarkovTree tz(zero, TimeGrid(0.0, 1.0, 4), 1.0, 0.0);
  CHECK(decouple_check(zero, tz, TreeControls::constant(tz, 0, 0)).max_discrepancy == 0.0);

  const GameSpec lin = make_spec({{"ftilde_1", "y2"}, {"ftilde_2", "y1"}, {"Phi_1", "1"}, {"diffusion", {"1"}}});
  const MarkovTree tl(lin, TimeGrid(0.0, 1.0, 6), 1.0, 0.0);
  CHECK(decouple_check(lin, tl, TreeControls::constant(tl, 0, 0)).max_discrepancy <= 1e-10);

  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const GameSpec s = spec_from_json(nsdg::testing::random_game_json(seed, 2));
    nsdg::testing::InstanceRng r(seed);
    const int M = r.integer(2, 4);
    const MarkovTree tree(s, TimeGrid(0.0, s.T, M), s.lambda, r.uniform(-1, 1));
    TreeControls ctl = TreeControls::constant(tree, 0, 0);
    for (std::size_t id = 0; id < tree.node_count(); ++id) {
      ctl.u[id] = r.integer(0, static_cast<int>(s.U.size()) - 1);
      ctl.v[id] = r.integer(0, static_cast<int>(s.V.size()) - 1);
    }
    worst = std::max(worst, decouple_check(s, tree, ctl).max_discrepancy);
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("semigroup identities") {
  const GameSpec s = spec_from_json(nsdg::testing::random_game_json(11));
  const MarkovTree tree(s, TimeGrid(0.0, s.T, 6), s.lambda, 0.3);
  const auto ctl = TreeControls::constant(tree, 0, 0);
  std::vector<double> eta(tree.level_size(4));
  for (std::size_t i = 0; i < eta.size(); ++i) eta[i] = std::sin(0.7 * static_cast<double>(i));
  CHECK(semigroup_apply(s, tree, ctl, 4, 4, eta, 1) == eta);

  std::vector<double> phi(tree.level_size(6));
  for (int j = -6; j <= 6; ++j)
    for (int par = 0; par < 2; ++par) {
      const double x = tree.x(6, j);
      phi[MarkovTree::node_id(6, j, par) - MarkovTree::level_offset(6)] = s.terminal(regime_at(2, par), {&x, 1});
    }
  const auto full = solve_tree(decoupled_problem(s, tree, ctl, 2));
  const auto g = semigroup_apply(s, tree, ctl, 2, 6, phi, 2);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == full.Y[MarkovTree::level_offset(2) + i]);

  for (int i = 1; i <= 2; ++i) {
    const auto inner = semigroup_apply(s, tree, ctl, 3, 5, std::vector<double>(phi.begin(), phi.begin() + tree.level_size(5)), i);
    const auto nested = semigroup_apply(s, tree, ctl, 1, 3, inner, i);
    const auto direct = semigroup_apply(s, tree, ctl, 1, 5, std::vector<double>(phi.begin(), phi.begin() + tree.level_size(5)), i);
    for (std::size_t a = 0; a < nested.size(); ++a) CHECK(std::fabs(nested[a] - direct[a]) <= 1e-12);
  }
}

TEST_CASE("comparison examples") {
  const GameSpec s = make_spec({{"diffusion", {"1"}}});
  const MarkovTree tree(s, TimeGrid(0.0, 1.0, 6), 1.0, 0.0);
  const auto ctl = TreeControls::constant(tree, 0, 0);
  auto f = [](const DriverPoint& p) { return 0.5 * std::tanh(p.y) + 0.3 * p.z[0] + 0.5 * p.h; };
  auto xi = [](std::span<const double> x, int, std::size_t) { return std::sin(x[0]); };
  auto xi1 = [](std::span<const double> x, int, std::size_t) { return std::sin(x[0]) + 1.0; };
  const BsdeProblem p2 = plain_problem(tree, ctl, f, xi);
  const BsdeProblem shifted = plain_problem(tree, ctl, f, xi1);
  const ComparisonReport a = comparison_check(shifted, p2, 0.5);
  CHECK(a.verdict == Verdict::pass);
  CHECK(a.root_gap > 0.0);
  const BsdeProblem raised = plain_problem(tree, ctl, [f](const DriverPoint& p) { return f(p) + 1.0; }, xi);
  CHECK(comparison_check(raised, p2, 0.5).verdict == Verdict::pass);
  // Reversed data violate the terminal-ordering precondition.
  CHECK(comparison_check(p2, shifted, 0.5).verdict == Verdict::inconclusive);
  // A strongly negative jump slope breaks discrete monotonicity.
  const BsdeProblem bad = plain_problem(tree, ctl, [](const DriverPoint& p) { return -40.0 * p.h + 1.0; }, xi);
  const BsdeProblem bad2 = plain_problem(tree, ctl, [](const DriverPoint& p) { return -40.0 * p.h; }, xi);
  CHECK(comparison_check(bad, bad2, 0.0).verdict == Verdict::inconclusive);
}

TEST_CASE("stability estimate examples") {
  const GameSpec s = make_spec({{"diffusion", {"1"}}});
  const MarkovTree tree(s, TimeGrid(0.0, 1.0, 8), 1.0, 0.0);
  const auto ctl = TreeControls::constant(tree, 0, 0);
  const BsdeProblem base =
      plain_problem(tree, ctl, [](const DriverPoint& p) { return 0.5 * p.y - 0.2 * p.z[0] + 0.3 * p.h; },
                    [](std::span<const double> x, int, std::size_t) { return x[0]; });
  auto zero = [](std::size_t) { return 0.0; };
  const EstimateReport same = stability_estimate_check(base, base.terminal, base.terminal, zero, zero, 0.5);
  CHECK(same.lhs == 0.0);
  CHECK(same.rhs == 0.0);
  CHECK(same.pass);

  BsdeProblem flat = base;
  flat.driver = [](const DriverPoint&) { return 0.0; };
  const EstimateReport shift =
      stability_estimate_check(flat, const_terminal(1.0), const_terminal(0.0), zero, zero, 0.5);
  const double beta = 2.0 + 2.0 * 0.5 + 4.0 * 0.25;
  CHECK(shift.beta == beta);
  CHECK(shift.lhs == doctest::Approx(1.0 + 0.5 * (std::exp(beta) - 1.0) / beta).epsilon(0.2));
  CHECK(shift.rhs == doctest::Approx(std::exp(beta)));
  CHECK(shift.pass);
}

TEST_CASE("regression solver") {
  const GameSpec s = make_spec({{"diffusion", {"1"}}, {"lambda", 1.0}});
  const TimeGrid grid(0.0, 1.0, 8);
  const double x0 = 0.4;
  auto run = [&](int S, std::uint64_t seed, DriverFn f, TerminalFn xi) {
    const ScenarioBundle sc = sample_scenarios(grid, 1.0, S, seed);
    const StatePath path = simulate_forward(s, sc, constant_policy(0), constant_policy(0), {&x0, 1});
    BsdeProblem p;
    p.driver = std::move(f);
    p.terminal = std::move(xi);
    p.form = JumpForm::plain;
    p.scenarios = &sc;
    p.path = &path;
    p.spec = &s;
    return solve_regression(p);
  };
  auto lin = [](std::span<const double> x, int, std::size_t) { return 2.0 * x[0] + 1.0; };
  const BsdeSolution a = run(10000, 3, [](const DriverPoint&) { return 0.0; }, lin);
  CHECK(std::fabs(a.root() - 1.8) <= 3.0 * a.root_se + 1e-12);

  auto ode = [](const DriverPoint& p) { return 0.3 * p.y; };
  const BsdeSolution b = run(10000, 4, ode, const_terminal(2.0));
  const MarkovTree tree(s, grid, 1.0, x0);
  const auto ctl = TreeControls::constant(tree, 0, 0);
  const BsdeSolution t = solve_tree(plain_problem(tree, ctl, ode, const_terminal(2.0)));
  CHECK(std::fabs(b.root() - t.root()) <= 3.0 * b.root_se + 1e-12);

  auto wave = [](std::span<const double> x, int, std::size_t) { return std::sin(x[0]); };
  const BsdeSolution s1 = run(10000, 5, [](const DriverPoint&) { return 0.0; }, wave);
  const BsdeSolution s4 = run(40000, 5, [](const DriverPoint&) { return 0.0; }, wave);
  const double ratio = s1.root_se / s4.root_se;
  CHECK(ratio >= 1.4);
  CHECK(ratio <= 2.6);
}

TEST_CASE("root value is Lipschitz in the initial state") {
  const GameSpec s = spec_from_json(nsdg::testing::random_game_json(5, 1));
  double prev = 0.0;
  for (int M : {16, 32, 64}) {
    const MarkovTree a(s, TimeGrid(0.0, s.T, M), s.lambda, 0.0);
    const MarkovTree b(s, TimeGrid(0.0, s.T, M), s.lambda, 0.1);
    const double ya = solve_tree(decoupled_problem(s, a, TreeControls::constant(a, 0, 0), 1)).root();
    const double yb = solve_tree(decoupled_problem(s, b, TreeControls::constant(b, 0, 0), 1)).root();
    const double c = std::fabs(ya - yb) / 0.1;
    if (prev > 0.0) CHECK(std::fabs(c - prev) <= 0.2 * prev);
    prev = c;
  }
}

TEST_CASE("solution CSV") {
  const GameSpec s = make_spec({{"diffusion", {"1"}}});
  const MarkovTree tree(s, TimeGrid(0.0, 1.0, 2), 1.0, 0.0);
  const auto ctl = TreeControls::constant(tree, 0, 0);
  const auto sol = solve_tree(decoupled_problem(s, tree, ctl, 1));
  std::ostringstream os;
  write_solution_csv(os, sol, &tree, nullptr, 1);
  CHECK(os.str().rfind("mode,component,k,t,node_or_scenario,x,regime,Y,Z,H\n", 0) == 0);
}
