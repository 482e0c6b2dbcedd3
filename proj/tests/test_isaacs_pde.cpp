#include <doctest.h>

#include <cmath>
#include <sstream>

#include "nsdg/isaacs_pde.hpp"
#include "random_specs.hpp"
#include "support.hpp"

using namespace nsdg;
using nsdg::testing::make_spec;

namespace {

const nlohmann::json kRemark = {{"controls", {{"U", {0.0, 0.25, 0.5, 0.75, 1.0}}, {"V", {-1.0, -0.5, 0.0, 0.5, 1.0}}}},
                                {"ftilde_1", "v*u*u"},
                                {"ftilde_2", "v*u*u"}};

double max_interior_dev(const ValueField& f, int c, const std::function<double(double, double)>& exact) {
  double worst = 0.0;
  for (int k = 0; k <= f.time.M; ++k)
    for (int j = kBoundaryExclusion; j < f.space.nodes() - kBoundaryExclusion; ++j)
      worst = std::max(worst, std::fabs(f.at(c, k, j) - exact(f.time.tau(k), f.space.x(j))));
  return worst;
}

}  // namespace

TEST_CASE("hamiltonian examples") {
  HamiltonianInputs in;
  CHECK(hamiltonian(make_spec({}), 1, in) == 0.0);
  in.A[0] = 2.0;
  CHECK(hamiltonian(make_spec({{"diffusion", {"1"}}}), 1, in) == doctest::Approx(1.0));
  in.A[0] = 0.0;
  in.p[0] = 3.0;
  CHECK(hamiltonian(make_spec({{"drift", {"1"}}}), 2, in) == doctest::Approx(3.0));
  // z enters as p·σ.
  CHECK(hamiltonian(make_spec({{"diffusion", {"2"}}, {"ftilde_1", "z"}}), 1, in) == doctest::Approx(6.0));
}

TEST_CASE("minimax orders") {
  const GameSpec r = make_spec(kRemark);
  const HamiltonianInputs in;
  CHECK(minimax_hamiltonian(r, 1, in, MinimaxOrder::sup_u_inf_v).value == 0.0);
  CHECK(minimax_hamiltonian(r, 1, in, MinimaxOrder::inf_v_sup_u).value == 0.0);
  CHECK(minimax_hamiltonian(r, 1, in, MinimaxOrder::sup_v_inf_u).value == 0.0);
  CHECK(minimax_hamiltonian(r, 1, in, MinimaxOrder::inf_u_sup_v).value == 0.0);

  const GameSpec uv = make_spec({{"controls", {{"U", {-1.0, 1.0}}, {"V", {-1.0, 1.0}}}}, {"ftilde_1", "u*v"}});
  CHECK(minimax_hamiltonian(uv, 1, in, MinimaxOrder::sup_u_inf_v).value == -1.0);
  CHECK(minimax_hamiltonian(uv, 1, in, MinimaxOrder::inf_v_sup_u).value == 1.0);
  const IsaacsGapReport g = isaacs_gap(uv);
  CHECK(g.gap_lower == doctest::Approx(2.0));
  CHECK_FALSE(g.isaacs());

  const GameSpec one = make_spec({{"ftilde_1", "x + y1"}});
  HamiltonianInputs at;
  at.x[0] = 0.7;
  at.y1 = 0.2;
  for (auto o : {MinimaxOrder::sup_u_inf_v, MinimaxOrder::inf_v_sup_u, MinimaxOrder::sup_v_inf_u, MinimaxOrder::inf_u_sup_v})
    CHECK(minimax_hamiltonian(one, 1, at, o).value == hamiltonian(one, 1, at));

  // Ties break towards the lowest index.
  const MinimaxResult t = minimax({1.0, 1.0, 1.0, 1.0}, 2, 2, MinimaxOrder::sup_u_inf_v);
  CHECK(t.iu == 0);
  CHECK(t.iv == 0);
}

TEST_CASE("isaacs gaps vanish on separable and remark instances") {
  CHECK(isaacs_gap(make_spec(kRemark)).isaacs());
  const GameSpec sep = make_spec({{"controls", {{"U", {-1.0, 0.0, 2.0}}, {"V", {-1.0, 1.0}}}},
                                  {"ftilde_1", "u*u - 2*v + y1"},
                                  {"ftilde_2", "abs(u) + v*v*x"}});
  CHECK(isaacs_gap(sep).isaacs());
}

TEST_CASE("minimax ordering holds pointwise") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const GameSpec s = spec_from_json(nsdg::testing::random_game_json(seed));
    for (const auto& in : default_gap_samples(s)) {
      for (int i = 1; i <= 2; ++i) {
        CHECK(minimax_hamiltonian(s, i, in, MinimaxOrder::sup_u_inf_v).value <=
              minimax_hamiltonian(s, i, in, MinimaxOrder::inf_v_sup_u).value + 1e-15);
        CHECK(minimax_hamiltonian(s, i, in, MinimaxOrder::sup_v_inf_u).value <=
              minimax_hamiltonian(s, i, in, MinimaxOrder::inf_u_sup_v).value + 1e-15);
      }
      break;
    }
  }
}

TEST_CASE("solver oracles") {
  const SpaceGrid grid(-4.0, 4.0, 60);
  const GameSpec heat = make_spec({{"diffusion", {"1"}}, {"Phi_1", "x"}, {"Phi_2", "x"}});
  const int M = cfl_min_steps(heat, grid, 0.0);
  const TimeGrid time(0.0, 1.0, M);
  const ValueField f = solve_coupled_isaacs(heat, grid, time, {false, 1});
  CHECK(max_interior_dev(f, 0, [](double, double x) { return x; }) <= 1e-8);

  const GameSpec flat = make_spec({{"diffusion", {"1"}}, {"Phi_1", "3"}, {"Phi_2", "3"}});
  const ValueField c = solve_coupled_isaacs(flat, grid, time, {true, 2});
  for (double w : c.W[0]) CHECK(w == 3.0);

  const GameSpec clock = make_spec({{"ftilde_1", "1"}});
  const ValueField tf = solve_coupled_isaacs(clock, grid, TimeGrid(0.0, 1.0, 10), {false, 1});
  CHECK(max_interior_dev(tf, 0, [](double t, double) { return 1.0 - t; }) <= 1e-8);

  // Terminal slice is bit-exact.
  for (int j = 0; j < grid.nodes(); ++j) CHECK(f.at(0, M, j) == grid.x(j));
}

TEST_CASE("CFL refusal suggests a step count") {
  const SpaceGrid grid(-4.0, 4.0, 200);
  const GameSpec heat = make_spec({{"diffusion", {"1"}}});
  try {
    solve_coupled_isaacs(heat, grid, TimeGrid(0.0, 1.0, 10), {false, 1});
    FAIL("expected PdeError");
  } catch (const PdeError& e) {
    CHECK(e.suggested_M == cfl_min_steps(heat, grid, 0.0));
    CHECK(e.suggested_M > 10);
  }
}

TEST_CASE("scheme is monotone in the later slice") {
  const GameSpec s = spec_from_json(nsdg::testing::random_game_json(3));
  const SpaceGrid grid(-3.0, 3.0, 30);
  const TimeGrid time(0.0, s.T, cfl_min_steps(s, grid, 0.0));
  std::vector<double> w1(static_cast<std::size_t>(grid.nodes())), w2(w1.size());
  for (int j = 0; j < grid.nodes(); ++j) {
    w1[static_cast<std::size_t>(j)] = std::sin(grid.x(j));
    w2[static_cast<std::size_t>(j)] = 0.3 * grid.x(j);
  }
  std::vector<double> a1, a2, b1, b2;
  isaacs_step(s, grid, time, MinimaxOrder::sup_u_inf_v, 0, w1, w2, a1, a2);
  nsdg::testing::InstanceRng r(9);
  for (int trial = 0; trial < 40; ++trial) {
    const int j = r.integer(1, grid.J);
    auto p1 = w1;
    p1[static_cast<std::size_t>(j)] += 1e-4;
    isaacs_step(s, grid, time, MinimaxOrder::sup_u_inf_v, 0, p1, w2, b1, b2);
    for (int q = 0; q < grid.nodes(); ++q) CHECK(b1[static_cast<std::size_t>(q)] >= a1[static_cast<std::size_t>(q)] - 1e-15);
  }
}

TEST_CASE("single control collapses the orientations") {
  const GameSpec s = spec_from_json(nsdg::testing::random_game_json(2, 1));
  const SpaceGrid grid(-3.0, 3.0, 20);
  const TimeGrid time(0.0, s.T, cfl_min_steps(s, grid, 0.0));
  const ValueField p1 = solve_coupled_isaacs(s, grid, time, {false, 1});
  const ValueField p2 = solve_coupled_isaacs(s, grid, time, {false, 2});
  for (int c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < p1.W[c].size(); ++i) CHECK(std::fabs(p1.W[c][i] - p2.W[c][i]) <= 1e-12);
}

TEST_CASE("raising a terminal never lowers the field") {
  const nlohmann::json base = {{"diffusion", {"0.8"}}, {"drift", {"0.2*u"}},
                               {"controls", {{"U", {-1.0, 1.0}}, {"V", {0.0, 1.0}}}},
                               {"ftilde_1", "0.5*y2 - y1 + u*v"}, {"ftilde_2", "0.5*y1 + v"},
                               {"Phi_1", "sin(x)"}, {"Phi_2", "0.2*x"}, {"K", 0.5}};
  nlohmann::json raised = base;
  raised["Phi_2"] = "0.2*x + 0.5 + 0.1*cos(x)";
  const GameSpec a = make_spec(base), b = make_spec(raised);
  const SpaceGrid grid(-3.0, 3.0, 20);
  const TimeGrid time(0.0, 1.0, cfl_min_steps(a, grid, 0.0));
  const ValueField fa = solve_coupled_isaacs(a, grid, time, {false, 1});
  const ValueField fb = solve_coupled_isaacs(b, grid, time, {false, 1});
  for (int c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < fa.W[c].size(); ++i) CHECK(fb.W[c][i] >= fa.W[c][i] - 1e-14);
}

TEST_CASE("coincidence check") {
  const GameSpec free = make_spec({{"diffusion", {"1"}}, {"ftilde_1", "sin(x) + 0.5*y2"}, {"Phi_1", "x"}});
  const std::vector<SpaceGrid> grids = {SpaceGrid(-4, 4, 20), SpaceGrid(-4, 4, 41)};
  std::vector<int> Ms;
  for (const auto& g : grids) Ms.push_back(cfl_min_steps(free, g, 0.0));
  const CoincidenceReport r = coincidence_check(free, 0.0, grids, Ms);
  CHECK(r.verdict == "PASS");
  for (const auto& l : r.levels) CHECK(l.values[0].second == 0.0);

  const GameSpec uv = make_spec({{"controls", {{"U", {-1.0, 1.0}}, {"V", {-1.0, 1.0}}}}, {"diffusion", {"1"}},
                                 {"ftilde_1", "u*v"}, {"ftilde_2", "u*v"}});
  const CoincidenceReport bad = coincidence_check(uv, 0.0, grids, Ms);
  CHECK(bad.verdict == "INCONCLUSIVE");
  CHECK(bad.min_upper_minus_lower >= -1e-12);
}

TEST_CASE("regularity statistics") {
  const GameSpec flat = make_spec({{"Phi_1", "2"}, {"Phi_2", "2"}});
  const SpaceGrid grid(-4, 4, 20);
  const ValueField c = solve_coupled_isaacs(flat, grid, TimeGrid(0.0, 1.0, 8), {false, 1});
  CHECK(field_regularity(c).spatial_quotient == 0.0);
  CHECK(field_regularity(c).holder_ratio == 0.0);
  const GameSpec lin = make_spec({{"Phi_1", "x"}, {"Phi_2", "x"}});
  const ValueField l = solve_coupled_isaacs(lin, grid, TimeGrid(0.0, 1.0, 8), {false, 1});
  CHECK(field_regularity(l).spatial_quotient == doctest::Approx(1.0));
  CHECK(field_regularity(l).holder_ratio == 0.0);
}

TEST_CASE("field CSV columns") {
  const GameSpec s = make_spec({});
  const SpaceGrid grid(-1, 1, 3);
  const TimeGrid time(0.0, 1.0, 4);
  const ValueField a = solve_coupled_isaacs(s, grid, time, {false, 1});
  const ValueField b = solve_coupled_isaacs(s, grid, time, {false, 2});
  std::ostringstream os;
  write_fields_csv(os, {&a, &b});
  CHECK(os.str().rfind("k,t,j,x,W1,W2,W1p,W2p\n", 0) == 0);
}
