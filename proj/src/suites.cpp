#include "nsdg/suites.hpp"

#include <algorithm>
#include <cmath>

#include "nsdg/instances.hpp"

namespace nsdg {

namespace {

struct PlainInstance {
  GameSpec spec;
  int M = 4;
  double x0 = 0.0;
  double lambda = 0.5;  // below 1, so K - λ > -1 for every K >= 0
  double a = 0.0, b = 0.0, c = 0.0, d = 0.0;  // g = a tanh(y) + b z + c h + d sin(x)
  double xi_lin = 0.0, xi_sin = 0.0, xi_freq = 1.0;
};

PlainInstance plain_instance(std::uint64_t seed, instances::InstanceRng& r, double C) {
  PlainInstance p;
  p.spec = spec_from_json(instances::random_game_json(seed));
  p.M = r.integer(4, 10);
  p.x0 = r.uniform(-1.0, 1.0);
  p.lambda = r.uniform(0.2, 0.95);
  p.a = r.uniform(-C, C);
  p.b = r.uniform(-0.2, 0.2) * std::min(C, 1.0);
  p.c = r.uniform(0.0, 1.0) * std::min(C, 1.0);
  p.d = r.uniform(-1.0, 1.0);
  p.xi_lin = r.uniform(-1.0, 1.0);
  p.xi_sin = r.uniform(-1.0, 1.0);
  p.xi_freq = r.uniform(0.5, 2.0);
  return p;
}

BsdeProblem plain_problem(const PlainInstance& in, const MarkovTree& tree, const TreeControls& ctl) {
  BsdeProblem p;
  const double a = in.a, b = in.b, c = in.c, d = in.d;
  p.driver = [a, b, c, d](const DriverPoint& q) { return a * std::tanh(q.y) + b * q.z[0] + c * q.h + d * std::sin(q.x[0]); };
  const double l = in.xi_lin, s = in.xi_sin, w = in.xi_freq;
  p.terminal = [l, s, w](std::span<const double> x, int, std::size_t) { return l * x[0] + s * std::sin(w * x[0]); };
  p.form = JumpForm::plain;
  p.tree = &tree;
  p.controls = &ctl;
  return p;
}

}  // namespace

nlohmann::json SuiteReport::to_json() const {
  return {{"check", check},
          {"statistic", statistic},
          {"instances", instances},
          {"violations", violations},
          {"inconclusive", inconclusive},
          {"worst", worst},
          {"tolerance", tolerance},
          {"seed", seed},
          {"note", note},
          {"verdict", verdict_str(pass)}};
}

nlohmann::json FlowReport::to_json() const {
  return {{"check", "semigroup-flow"},
          {"statistic", "max_abs_composition_error"},
          {"max_error", max_error},
          {"triples", triples},
          {"verdict", verdict_str(pass)}};
}

TreeControls random_tree_controls(const GameSpec& spec, const MarkovTree& tree, std::uint64_t seed) {
  instances::InstanceRng r(seed);
  TreeControls c = TreeControls::constant(tree, 0, 0);
  for (std::size_t id = 0; id < tree.node_count(); ++id) {
    c.u[id] = r.integer(0, static_cast<int>(spec.U.size()) - 1);
    c.v[id] = r.integer(0, static_cast<int>(spec.V.size()) - 1);
  }
  return c;
}

SuiteReport decouple_suite(int instances, std::uint64_t seed, double tol) {
  SuiteReport rep;
  rep.check = "decouple";
  rep.statistic = "max_nodewise_discrepancy";
  rep.instances = instances;
  rep.tolerance = tol;
  rep.seed = seed;
  for (int n = 0; n < instances; ++n) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(n);
    const GameSpec spec = spec_from_json(instances::random_game_json(s, 3));
    instances::InstanceRng r(s ^ 0xD1CEULL);
    const int M = r.integer(2, 6);
    const MarkovTree tree(spec, TimeGrid(0.0, spec.T, M), spec.lambda, r.uniform(-1.0, 1.0));
    const double d = decouple_check(spec, tree, random_tree_controls(spec, tree, s)).max_discrepancy;
    rep.worst = std::max(rep.worst, d);
    if (!(d <= tol)) ++rep.violations;
  }
  rep.pass = rep.violations == 0;
  return rep;
}

SuiteReport comparison_suite(int instances, std::uint64_t seed, double tol) {
  SuiteReport rep;
  rep.check = "comparison";
  rep.statistic = "min_nodewise_gap";
  rep.instances = instances;
  rep.tolerance = tol;
  rep.seed = seed;
  rep.worst = std::numeric_limits<double>::infinity();
  for (int n = 0; n < instances; ++n) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(n);
    instances::InstanceRng r(s ^ 0xC0FFEEULL);
    const PlainInstance in = plain_instance(s, r, 1.0);
    const MarkovTree tree(in.spec, TimeGrid(0.0, in.spec.T, in.M), in.lambda, in.x0);
    const TreeControls ctl = random_tree_controls(in.spec, tree, s);
    const BsdeProblem lower = plain_problem(in, tree, ctl);
    BsdeProblem upper = lower;
    const double bump = r.uniform(0.0, 0.5), wt = r.uniform(0.0, 0.5);
    const DriverFn g = lower.driver;
    const TerminalFn xi = lower.terminal;
    upper.driver = [g, bump](const DriverPoint& q) {
      return g(q) + bump * (1.0 + std::sin(3.0 * static_cast<double>(q.node))) / 2.0;
    };
    upper.terminal = [xi, wt](std::span<const double> x, int reg, std::size_t node) {
      return xi(x, reg, node) + wt * (1.0 + std::cos(x[0]));
    };
    const ComparisonReport c = comparison_check(upper, lower, in.c, tol);
    rep.worst = std::min(rep.worst, c.min_gap);
    if (c.verdict == Verdict::inconclusive && rep.inconclusive++ == 0) {
      rep.note = "instance " + std::to_string(n) + ": " + c.precondition;
    }
    if (c.violations > 0) ++rep.violations;
  }
  rep.pass = rep.violations == 0 && rep.inconclusive == 0;
  return rep;
}

SuiteReport estimate_suite(int instances, std::uint64_t seed, double tol) {
  SuiteReport rep;
  rep.check = "estimate";
  rep.statistic = "max_lhs_minus_rhs";
  rep.instances = instances;
  rep.tolerance = tol;
  rep.seed = seed;
  rep.worst = -std::numeric_limits<double>::infinity();
  for (int n = 0; n < instances; ++n) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(n);
    instances::InstanceRng r(s ^ 0xE57ULL);
    const double C = r.uniform(0.2, 1.0);
    const PlainInstance in = plain_instance(s, r, C);
    const double lip = std::max({std::fabs(in.a), std::fabs(in.b), std::fabs(in.c)});
    const MarkovTree tree(in.spec, TimeGrid(0.0, in.spec.T, in.M), in.lambda, in.x0);
    const TreeControls ctl = random_tree_controls(in.spec, tree, s);
    const BsdeProblem base = plain_problem(in, tree, ctl);
    const double s1 = r.uniform(-1, 1), s2 = r.uniform(-1, 1), w = r.uniform(0.5, 2.0);
    const double a1 = r.uniform(-0.5, 0.5), a2 = r.uniform(-0.5, 0.5), kap = r.uniform(0.1, 2.0);
    const TerminalFn t1 = [s1, w](std::span<const double> x, int, std::size_t) { return s1 * std::sin(w * x[0]); };
    const TerminalFn t2 = [s2](std::span<const double> x, int, std::size_t) { return s2 * std::tanh(x[0]); };
    auto p1 = [a1, kap](std::size_t node) { return a1 * std::sin(kap * static_cast<double>(node)); };
    auto p2 = [a2, kap](std::size_t node) { return a2 * std::cos(kap * static_cast<double>(node)); };
    const EstimateReport e = stability_estimate_check(base, t1, t2, p1, p2, lip, tol);
    rep.worst = std::max(rep.worst, e.lhs - e.rhs);
    if (!e.pass) ++rep.violations;
  }
  rep.pass = rep.violations == 0;
  return rep;
}

SuiteReport brute_force_suite(int instances, std::uint64_t seed, double tol) {
  SuiteReport rep;
  rep.check = "brute-force";
  rep.statistic = "max_abs_root_difference";
  rep.tolerance = tol;
  rep.seed = seed;
  for (int n = 0; n < instances; ++n) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(n);
    const GameSpec spec = spec_from_json(instances::random_game_json(s, 2, true));
    for (int M = 1; M <= 2; ++M) {
      if (spec.lambda * spec.T / M >= 1.0) continue;
      const MarkovTree tree(spec, TimeGrid(0.0, spec.T, M), spec.lambda, 0.3);
      for (int favor = 1; favor <= 2; ++favor) {
        const TreeValueResult tv = tree_value(spec, tree, {false, favor});
        for (int reg = 1; reg <= 2; ++reg) {
          const double d = std::fabs(brute_force_value(spec, tree, favor, reg).value - tv.root(reg));
          rep.worst = std::max(rep.worst, d);
          ++rep.instances;
          if (!(d <= tol)) ++rep.violations;
        }
      }
    }
  }
  rep.pass = rep.violations == 0 && rep.instances > 0;
  return rep;
}

FlowReport semigroup_flow_check(const GameSpec& spec, const MarkovTree& tree, const TreeControls& controls,
                                double tol) {
  FlowReport rep;
  const int M = tree.M();
  for (int k3 = 2; k3 <= M; ++k3) {
    std::vector<double> eta(tree.level_size(k3));
    for (int j = -k3; j <= k3; ++j)
      for (int par = 0; par < 2; ++par) {
        const double x = tree.x(k3, j);
        // Regime-indexed data Φ_{N} with a parity-dependent shift.
        eta[MarkovTree::node_id(k3, j, par) - MarkovTree::level_offset(k3)] =
            spec.terminal(regime_at(1, par), {&x, 1}) + 0.1 * par;
      }
    for (int i = 1; i <= 2; ++i) {
      for (int k2 = 1; k2 < k3; ++k2) {
        const std::vector<double> inner = semigroup_apply(spec, tree, controls, k2, k3, eta, i);
        for (int k1 = 0; k1 < k2; ++k1) {
          const std::vector<double> nested = semigroup_apply(spec, tree, controls, k1, k2, inner, i);
          const std::vector<double> direct = semigroup_apply(spec, tree, controls, k1, k3, eta, i);
          for (std::size_t a = 0; a < nested.size(); ++a)
            rep.max_error = std::max(rep.max_error, std::fabs(nested[a] - direct[a]));
          ++rep.triples;
        }
      }
    }
  }
  rep.pass = rep.max_error <= tol;
  return rep;
}

}  // namespace nsdg
