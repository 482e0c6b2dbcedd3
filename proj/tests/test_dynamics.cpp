#include <doctest.h>

#include <cmath>
#include <sstream>

#include "nsdg/dynamics.hpp"
#include "support.hpp"

using namespace nsdg;
using nsdg::testing::make_spec;

TEST_CASE("scenario laws") {
  const TimeGrid grid(0.0, 1.0, 1);
  const int S = 1000000;
  const auto sc = sample_scenarios(grid, 2.0, S, 7);
  double mb = 0.0, mn = 0.0;
  for (int s = 0; s < S; ++s) {
    mb += sc.dB_at(s, 0)[0];
    mn += sc.dN_at(s, 0);
  }
  mb /= S;
  mn /= S;
  CHECK(std::fabs(mb) <= 4.0 * std::sqrt(grid.dt() / S));
  CHECK(std::fabs(mn - 2.0) <= 4.0 * std::sqrt(2.0 / S));

  const auto none = sample_scenarios(TimeGrid(0.0, 1.0, 8), 0.0, 100, 3);
  for (int n : none.dN) CHECK(n == 0);
}

TEST_CASE("scenario regeneration is bit-identical") {
  const TimeGrid grid(0.0, 1.0, 16);
  const auto a = sample_scenarios(grid, 1.0, 64, 42, 2);
  const auto b = sample_scenarios(grid, 1.0, 64, 42, 2);
  CHECK(a.dB == b.dB);
  CHECK(a.dN == b.dN);
  const auto c = sample_scenarios(grid, 1.0, 64, 43, 2);
  CHECK(a.dB != c.dB);
}

TEST_CASE("tree shape and normalization") {
  const GameSpec s = make_spec({{"diffusion", {"1 + 0.2*sin(x)"}}, {"drift", {"0.3*u - 0.2*x"}},
                                {"controls", {{"U", {-1.0, 1.0}}, {"V", {0.0}}}}});
  const MarkovTree one(s, TimeGrid(0.0, 1.0, 1), 0.5, 0.0);
  CHECK(one.node_count() - MarkovTree::level_offset(1) == 6);
  const MarkovTree tree(s, TimeGrid(0.0, 1.0, 8), 0.5, 0.2);
  CHECK(tree.level_size(2) == 10);
  for (int k = 0; k < tree.M(); ++k) {
    for (int j = -k; j <= k; ++j) {
      for (double u : s.U) {
        const Transition tr = tree.transition(k, tree.x(k, j), u, 0.0);
        CHECK(std::fabs(tr.p[0] + tr.p[1] + tr.p[2] - 1.0) <= 1e-15);
        for (double p : tr.p) CHECK(p >= 0.0);
        if (!tr.adjusted) {
          // Mean and variance of the increment match bΔ and |σ|²Δ.
          double m = 0.0, v = 0.0;
          for (int c = 0; c < 3; ++c) {
            const double inc = tree.x(k + 1, j + c - 1) - tree.x(k, j);
            m += tr.p[c] * inc;
          }
          for (int c = 0; c < 3; ++c) {
            const double inc = tree.x(k + 1, j + c - 1) - tree.x(k, j) - m;
            v += tr.p[c] * inc * inc;
          }
          CHECK(m == doctest::Approx(tr.mean).epsilon(1e-12));
          CHECK(v == doctest::Approx(tr.sigma_norm2 * tree.dt()).epsilon(1e-10));
        }
      }
    }
  }
}

TEST_CASE("reference trinomial for constant coefficients") {
  const GameSpec s = make_spec({{"diffusion", {"1"}}});
  const MarkovTree tree(s, TimeGrid(0.0, 1.0, 4), 1.0, 0.0);
  const Transition tr = tree.transition(0, 0.0, 0.0, 0.0);
  CHECK(tr.p[0] == doctest::Approx(1.0 / 6.0));
  CHECK(tr.p[1] == doctest::Approx(2.0 / 3.0));
  CHECK(tree.h() == doctest::Approx(std::sqrt(3.0 * 0.25)));
}

TEST_CASE("state_dim above one is refused by the tree") {
  const GameSpec s = make_spec({{"state_dim", 2}, {"drift", {"0", "0"}}, {"diffusion", {"0", "0"}}});
  CHECK_THROWS_AS(MarkovTree(s, TimeGrid(0.0, 1.0, 2), 1.0, 0.0), DynamicsError);
}

TEST_CASE("forward simulation examples") {
  const double x0 = 0.5;
  const TimeGrid grid(0.0, 1.0, 10);
  const auto sc = sample_scenarios(grid, 1.0, 100, 1);
  const StatePath frozen = simulate_forward(make_spec({}), sc, constant_policy(0), constant_policy(0), {&x0, 1});
  for (double x : frozen.X) CHECK(x == x0);
  const StatePath ode =
      simulate_forward(make_spec({{"drift", {"1"}}}), sc, constant_policy(0), constant_policy(0), {&x0, 1});
  CHECK(*ode.X_at(0, 10) == doctest::Approx(1.5).epsilon(1e-14));

  const auto big = sample_scenarios(grid, 1.0, 100000, 2);
  const StatePath bm =
      simulate_forward(make_spec({{"diffusion", {"1"}}}), big, constant_policy(0), constant_policy(0), {&x0, 1});
  double m = 0.0, v = 0.0;
  for (int s = 0; s < big.S; ++s) m += *bm.X_at(s, 10);
  m /= big.S;
  for (int s = 0; s < big.S; ++s) v += (*bm.X_at(s, 10) - m) * (*bm.X_at(s, 10) - m);
  v /= big.S - 1;
  CHECK(std::fabs(v - 1.0) <= 0.05);

  // Regime track follows jump parity.
  for (int s = 0; s < 100; ++s) {
    int jumps = 0;
    for (int k = 0; k < 10; ++k) {
      CHECK(bm.regime(1, s, k) == regime_at(1, jumps));
      jumps += big.dN_at(s, k);
    }
  }
}

TEST_CASE("non-finite state aborts with a location") {
  const double x0 = 1.0;
  const TimeGrid grid(0.0, 1.0, 40);
  const auto sc = sample_scenarios(grid, 1.0, 4, 1);
  const GameSpec s = make_spec({{"drift", {"exp(exp(x))"}}});
  try {
    simulate_forward(s, sc, constant_policy(0), constant_policy(0), {&x0, 1});
    FAIL("expected DynamicsError");
  } catch (const DynamicsError& e) {
    CHECK(std::string(e.what()).find("scenario") != std::string::npos);
  }
}

TEST_CASE("moment checks") {
  const double x0 = 0.5, x1 = 0.7;
  const TimeGrid grid(0.0, 1.0, 16);
  const auto sc = sample_scenarios(grid, 1.0, 200, 5);
  const GameSpec aff = make_spec({{"drift", {"0.5*x + 0.2"}}, {"diffusion", {"0.3*x + 0.4"}}});
  const MomentReport same = moment_check(aff, sc, constant_policy(0), constant_policy(0), {&x0, 1}, {&x0, 1});
  CHECK(same.exact_zero_deviation);
  const MomentReport fr = moment_check(make_spec({}), sc, constant_policy(0), constant_policy(0), {&x0, 1}, {&x1, 1});
  CHECK(fr.growth_ratio == 0.0);
  const MomentRefinement ref =
      moment_refinement(aff, 0.0, {16, 32, 64}, 2000, 9, constant_policy(0), constant_policy(0), {&x0, 1}, {&x1, 1});
  CHECK_FALSE(ref.diverging);
}

TEST_CASE("path CSV header") {
  const double x0 = 0.0;
  const TimeGrid grid(0.0, 1.0, 2);
  const auto sc = sample_scenarios(grid, 1.0, 2, 1);
  const StatePath p = simulate_forward(make_spec({}), sc, constant_policy(0), constant_policy(0), {&x0, 1});
  std::ostringstream os;
  write_path_csv(os, p, sc);
  CHECK(os.str().rfind("scenario,k,t,x,regime1,regime2,dB,dN\n", 0) == 0);
}
