#include "nsdg/bsde.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "nsdg/io.hpp"

namespace nsdg {

TreeControls TreeControls::constant(const MarkovTree& tree, int iu, int iv) {
  TreeControls c;
  c.u.assign(tree.node_count(), iu);
  c.v.assign(tree.node_count(), iv);
  return c;
}

void gather_children(const std::vector<double>& no_jump_src, const std::vector<double>& jump_src, int k, int j,
                     int parity, double* nj, double* jp) {
  for (int m = -1; m <= 1; ++m) {
    nj[m + 1] = no_jump_src[MarkovTree::node_id(k + 1, j + m, parity)];
    jp[m + 1] = jump_src[MarkovTree::node_id(k + 1, j + m, 1 - parity)];
  }
}

namespace {

void require_tree(const BsdeProblem& p) {
  if (!p.tree) throw BsdeError("tree mode needs a tree");
  if (p.tree->q() >= 1.0) throw BsdeError("lambda*dt >= 1: H estimator degenerate");
  if (p.controls && p.controls->u.size() < p.tree->node_count()) throw BsdeError("tree controls too short");
}

std::pair<int, int> node_controls(const BsdeProblem& p, std::size_t node) {
  if (!p.controls) return {0, 0};
  return {p.controls->u[node], p.controls->v[node]};
}

}  // namespace

BsdeSolution solve_tree_range(const BsdeProblem& problem, int k1, int k2, const std::vector<double>* eta) {
  require_tree(problem);
  const MarkovTree& tree = *problem.tree;
  const GameSpec& spec = tree.spec();
  if (k1 < 0 || k2 > tree.M() || k1 > k2) throw BsdeError("invalid step range");
  BsdeSolution sol;
  sol.mode = "tree";
  sol.M = tree.M();
  sol.d = spec.brownian_dim;
  const std::size_t nn = tree.node_count();
  sol.Y.assign(nn, 0.0);
  sol.H.assign(nn, 0.0);
  sol.Z.assign(nn * static_cast<std::size_t>(sol.d), 0.0);

  const std::size_t off2 = MarkovTree::level_offset(k2);
  if (eta && eta->size() != tree.level_size(k2)) throw BsdeError("terminal data has wrong size for the level");
  for (int j = -k2; j <= k2; ++j) {
    for (int par = 0; par < 2; ++par) {
      const std::size_t id = MarkovTree::node_id(k2, j, par);
      if (eta) {
        sol.Y[id] = (*eta)[id - off2];
      } else {
        const double x = tree.x(k2, j);
        sol.Y[id] = problem.terminal({&x, 1}, regime_at(problem.start_regime, par), id);
      }
    }
  }

  const double dt = tree.dt(), q = tree.q(), lam = tree.lambda();
  double nj[3], jp[3];
  for (int k = k2 - 1; k >= k1; --k) {
    const double t = tree.grid().tau(k);
    for (int j = -k; j <= k; ++j) {
      const double x = tree.x(k, j);
      for (int par = 0; par < 2; ++par) {
        const std::size_t id = MarkovTree::node_id(k, j, par);
        const auto [iu, iv] = node_controls(problem, id);
        const double u = spec.U[static_cast<std::size_t>(iu)], v = spec.V[static_cast<std::size_t>(iv)];
        const Transition tr = tree.transition(k, x, u, v);
        gather_children(sol.Y, sol.Y, k, j, par, nj, jp);
        const int regime = regime_at(problem.start_regime, par);
        DriverPoint pt;
        pt.k = k;
        pt.t = t;
        pt.x = {&x, 1};
        pt.u = u;
        pt.v = v;
        pt.regime = regime;
        pt.node = id;
        const StepResult r = tree_step(tr, q, dt, lam, nj, jp, sol.d, problem.form,
                                       [&](double y, double h, std::span<const double> z) {
                                         pt.y = y;
                                         pt.h = h;
                                         pt.z = z;
                                         return problem.driver(pt);
                                       });
        sol.Y[id] = r.Y;
        sol.H[id] = r.H;
        for (int c = 0; c < sol.d; ++c) sol.Z[id * static_cast<std::size_t>(sol.d) + c] = r.Z[static_cast<std::size_t>(c)];
      }
    }
  }
  return sol;
}

BsdeSolution solve_tree(const BsdeProblem& problem) {
  require_tree(problem);
  return solve_tree_range(problem, 0, problem.tree->M(), nullptr);
}

BsdeProblem decoupled_problem(const GameSpec& spec, const MarkovTree& tree, const TreeControls& controls, int i) {
  BsdeProblem p;
  const GameSpec* s = &spec;
  const DecoupledDriver f1(spec, 1), f2(spec, 2);
  p.driver = [f1, f2](const DriverPoint& pt) {
    return pt.regime == 1 ? f1(pt.t, pt.x, pt.y, pt.h, pt.z, pt.u, pt.v) : f2(pt.t, pt.x, pt.y, pt.h, pt.z, pt.u, pt.v);
  };
  p.terminal = [s](std::span<const double> x, int regime, std::size_t) { return s->terminal(regime, x); };
  p.start_regime = i;
  p.form = JumpForm::compensated;
  p.tree = &tree;
  p.controls = &controls;
  return p;
}

std::array<BsdeSolution, 2> solve_coupled(const GameSpec& spec, const MarkovTree& tree, const TreeControls& controls) {
  if (tree.q() >= 1.0) throw BsdeError("lambda*dt >= 1: H estimator degenerate");
  std::array<BsdeSolution, 2> sol;
  const std::size_t nn = tree.node_count();
  const int d = spec.brownian_dim;
  for (int c = 0; c < 2; ++c) {
    sol[c].mode = "tree";
    sol[c].component = c == 0 ? "coupled-1" : "coupled-2";
    sol[c].M = tree.M();
    sol[c].d = d;
    sol[c].Y.assign(nn, 0.0);
    sol[c].H.assign(nn, 0.0);
    sol[c].Z.assign(nn * static_cast<std::size_t>(d), 0.0);
  }
  const int M = tree.M();
  for (int j = -M; j <= M; ++j) {
    const double x = tree.x(M, j);
    for (int par = 0; par < 2; ++par) {
      const std::size_t id = MarkovTree::node_id(M, j, par);
      sol[0].Y[id] = spec.terminal(1, {&x, 1});
      sol[1].Y[id] = spec.terminal(2, {&x, 1});
    }
  }
  const double dt = tree.dt(), q = tree.q(), lam = tree.lambda();
  auto mean3 = [](const Transition& tr, const double* y) {
    return y[1] + tr.p[0] * (y[0] - y[1]) + tr.p[2] * (y[2] - y[1]);
  };
  double own_nj[3], own_jp[3], other_nj[3], other_jp[3];
  std::array<double, 3> z{};
  for (int k = M - 1; k >= 0; --k) {
    const double t = tree.grid().tau(k);
    for (int j = -k; j <= k; ++j) {
      const double x = tree.x(k, j);
      for (int par = 0; par < 2; ++par) {
        const std::size_t id = MarkovTree::node_id(k, j, par);
        const double u = spec.U[static_cast<std::size_t>(controls.u[id])];
        const double v = spec.V[static_cast<std::size_t>(controls.v[id])];
        const Transition tr = tree.transition(k, x, u, v);
        double newY[2], newH[2];
        std::array<std::array<double, 3>, 2> newZ{};
        for (int c = 0; c < 2; ++c) {
          gather_children(sol[c].Y, sol[c].Y, k, j, par, own_nj, own_jp);
          gather_children(sol[1 - c].Y, sol[1 - c].Y, k, j, par, other_nj, other_jp);
          const double A = mean3(tr, own_nj);
          const double Aj = mean3(tr, own_jp);
          const double P = mean3(tr, other_jp);  // other component just after a jump
          const double Ht = Aj - A;
          z.fill(0.0);
          if (tr.sigma_norm2 > 1e-28) {
            const double s = tr.p[0] * (own_nj[0] - own_nj[1]) * tr.dev[0] + tr.p[2] * (own_nj[2] - own_nj[1]) * tr.dev[2];
            for (int b = 0; b < d; ++b) z[static_cast<std::size_t>(b)] = tr.sigma[static_cast<std::size_t>(b)] * s / (tr.sigma_norm2 * dt);
          }
          const std::span<const double> zs(z.data(), static_cast<std::size_t>(d));
          const double E = A + q * Ht;
          // Coupling argument: own value plus the jump height into the other component.
          auto ft = [&](double own, double jumped) {
            return c == 0 ? spec.f(1, t, {&x, 1}, own, jumped, zs, u, v) : spec.f(2, t, {&x, 1}, jumped, own, zs, u, v);
          };
          const double Ystar = E + dt * (ft(A, P) - lam * Ht);
          newY[c] = E + dt * (ft(Ystar, Ystar + (P - A)) - lam * Ht);
          newH[c] = Ht;
          newZ[c] = z;
        }
        for (int c = 0; c < 2; ++c) {
          sol[c].Y[id] = newY[c];
          sol[c].H[id] = newH[c];
          for (int b = 0; b < d; ++b) sol[c].Z[id * static_cast<std::size_t>(d) + b] = newZ[c][static_cast<std::size_t>(b)];
        }
      }
    }
  }
  return sol;
}

nlohmann::json DecoupleReport::to_json() const {
  return {{"check", "decouple"},
          {"statistic", "max_abs_discrepancy"},
          {"max_discrepancy", max_discrepancy},
          {"nodes_checked", nodes_checked},
          {"verdict", verdict_str(pass())}};
}

DecoupleReport decouple_check(const GameSpec& spec, const MarkovTree& tree, const TreeControls& controls) {
  const auto coupled = solve_coupled(spec, tree, controls);
  DecoupleReport rep;
  for (int i = 1; i <= 2; ++i) {
    const BsdeSolution dec = solve_tree(decoupled_problem(spec, tree, controls, i));
    for (int k = 0; k <= tree.M(); ++k) {
      for (int j = -k; j <= k; ++j) {
        for (int par = 0; par < 2; ++par) {
          if (!tree.parity_reachable(k, par)) continue;
          const std::size_t id = MarkovTree::node_id(k, j, par);
          const int r = regime_at(i, par);
          rep.max_discrepancy = std::max(rep.max_discrepancy, std::fabs(dec.Y[id] - coupled[r - 1].Y[id]));
          ++rep.nodes_checked;
        }
      }
    }
  }
  return rep;
}

std::vector<double> semigroup_apply(const GameSpec& spec, const MarkovTree& tree, const TreeControls& controls,
                                    int k1, int k2, const std::vector<double>& eta, int i) {
  if (k1 == k2) return eta;
  const BsdeProblem p = decoupled_problem(spec, tree, controls, i);
  const BsdeSolution sol = solve_tree_range(p, k1, k2, &eta);
  const std::size_t off = MarkovTree::level_offset(k1);
  return {sol.Y.begin() + static_cast<std::ptrdiff_t>(off),
          sol.Y.begin() + static_cast<std::ptrdiff_t>(off + tree.level_size(k1))};
}

std::vector<double> node_probabilities(const MarkovTree& tree, const TreeControls& controls) {
  const GameSpec& spec = tree.spec();
  std::vector<double> prob(tree.node_count(), 0.0);
  prob[0] = 1.0;
  const double q = tree.q();
  for (int k = 0; k < tree.M(); ++k) {
    for (int j = -k; j <= k; ++j) {
      for (int par = 0; par < 2; ++par) {
        const std::size_t id = MarkovTree::node_id(k, j, par);
        if (prob[id] == 0.0) continue;
        const Transition tr = tree.transition(k, tree.x(k, j), spec.U[static_cast<std::size_t>(controls.u[id])],
                                              spec.V[static_cast<std::size_t>(controls.v[id])]);
        for (int m = -1; m <= 1; ++m) {
          const double pm = prob[id] * tr.p[static_cast<std::size_t>(m + 1)];
          prob[MarkovTree::node_id(k + 1, j + m, par)] += pm * (1.0 - q);
          prob[MarkovTree::node_id(k + 1, j + m, 1 - par)] += pm * q;
        }
      }
    }
  }
  return prob;
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::pass:
      return "PASS";
    case Verdict::fail:
      return "FAIL";
    default:
      return "INCONCLUSIVE";
  }
}

nlohmann::json ComparisonReport::to_json() const {
  return {{"check", "comparison"},
          {"violations", violations},
          {"min_gap", min_gap},
          {"root_gap", root_gap},
          {"precondition", precondition},
          {"verdict", verdict_name(verdict)}};
}

namespace {

// Recomputes the step of `p` at node (k, j, par) from children in `src`.
StepResult step_at(const BsdeProblem& p, const std::vector<double>& src, int k, int j, int par, const double* bump) {
  const MarkovTree& tree = *p.tree;
  const GameSpec& spec = tree.spec();
  const std::size_t id = MarkovTree::node_id(k, j, par);
  const auto [iu, iv] = node_controls(p, id);
  const double u = spec.U[static_cast<std::size_t>(iu)], v = spec.V[static_cast<std::size_t>(iv)];
  const double x = tree.x(k, j);
  const Transition tr = tree.transition(k, x, u, v);
  double nj[3], jp[3];
  gather_children(src, src, k, j, par, nj, jp);
  if (bump) {
    for (int c = 0; c < 3; ++c) {
      nj[c] += bump[c];
      jp[c] += bump[3 + c];
    }
  }
  DriverPoint pt;
  pt.k = k;
  pt.t = tree.grid().tau(k);
  pt.x = {&x, 1};
  pt.u = u;
  pt.v = v;
  pt.regime = regime_at(p.start_regime, par);
  pt.node = id;
  return tree_step(tr, tree.q(), tree.dt(), tree.lambda(), nj, jp, spec.brownian_dim, p.form,
                   [&](double y, double h, std::span<const double> z) {
                     pt.y = y;
                     pt.h = h;
                     pt.z = z;
                     return p.driver(pt);
                   });
}

}  // namespace

ComparisonReport comparison_check(const BsdeProblem& p1, const BsdeProblem& p2, double K, double tol) {
  ComparisonReport rep;
  if (!p1.tree || p1.tree != p2.tree) throw BsdeError("comparison needs both problems on one tree");
  const MarkovTree& tree = *p1.tree;
  const GameSpec& spec = tree.spec();
  auto inconclusive = [&](const std::string& why) {
    rep.verdict = Verdict::inconclusive;
    rep.precondition = why;
    return rep;
  };
  if (!(K - tree.lambda() > -1.0)) return inconclusive("intensity condition K - lambda > -1 fails");

  const BsdeSolution s1 = solve_tree(p1);
  const BsdeSolution s2 = solve_tree(p2);
  const int M = tree.M();
  for (int j = -M; j <= M; ++j) {
    for (int par = 0; par < 2; ++par) {
      if (!tree.parity_reachable(M, par)) continue;
      const std::size_t id = MarkovTree::node_id(M, j, par);
      if (s1.Y[id] < s2.Y[id]) return inconclusive("terminal ordering fails at node " + std::to_string(id));
    }
  }
  for (int k = M - 1; k >= 0; --k) {
    for (int j = -k; j <= k; ++j) {
      for (int par = 0; par < 2; ++par) {
        if (!tree.parity_reachable(k, par)) continue;
        const std::size_t id = MarkovTree::node_id(k, j, par);
        // Driver domination along solution 2, at the arguments the scheme uses.
        const StepResult r2 = step_at(p2, s2.Y, k, j, par, nullptr);
        const double x = tree.x(k, j);
        const auto [iu, iv] = node_controls(p2, id);
        DriverPoint pt;
        pt.k = k;
        pt.t = tree.grid().tau(k);
        pt.x = {&x, 1};
        pt.u = spec.U[static_cast<std::size_t>(iu)];
        pt.v = spec.V[static_cast<std::size_t>(iv)];
        pt.regime = regime_at(p2.start_regime, par);
        pt.node = id;
        pt.h = r2.H;
        pt.z = {r2.Z.data(), static_cast<std::size_t>(spec.brownian_dim)};
        for (double y : {r2.Ybar, r2.Ystar, r2.Y}) {
          pt.y = y;
          const double scale = 1e-12 * (1.0 + std::fabs(p2.driver(pt)));
          if (p1.driver(pt) < p2.driver(pt) - scale) {
            return inconclusive("driver domination fails at node " + std::to_string(id));
          }
        }
        const StepResult cross = step_at(p1, s2.Y, k, j, par, nullptr);
        if (cross.Y < r2.Y - 1e-13 * (1.0 + std::fabs(r2.Y))) {
          return inconclusive("one-step domination fails at node " + std::to_string(id));
        }
        // Discrete monotonicity of the first scheme in each child value.
        for (const std::vector<double>* src : {&s1.Y, &s2.Y}) {
          const StepResult base = step_at(p1, *src, k, j, par, nullptr);
          for (int c = 0; c < 6; ++c) {
            double bump[6] = {0, 0, 0, 0, 0, 0};
            bump[c] = 1e-6 * (1.0 + std::fabs(base.Y));
            const StepResult up = step_at(p1, *src, k, j, par, bump);
            if (up.Y < base.Y - 1e-12 * (1.0 + std::fabs(base.Y))) {
              return inconclusive("scheme not monotone at node " + std::to_string(id) +
                                  " (jump slope or z-slope too large for the step)");
            }
          }
        }
      }
    }
  }
  rep.min_gap = s1.Y[0] - s2.Y[0];
  rep.root_gap = rep.min_gap;
  for (int k = 0; k <= M; ++k) {
    for (int j = -k; j <= k; ++j) {
      for (int par = 0; par < 2; ++par) {
        if (!tree.parity_reachable(k, par)) continue;
        const std::size_t id = MarkovTree::node_id(k, j, par);
        const double gap = s1.Y[id] - s2.Y[id];
        rep.min_gap = std::min(rep.min_gap, gap);
        if (gap < -tol) ++rep.violations;
      }
    }
  }
  rep.verdict = rep.violations == 0 ? Verdict::pass : Verdict::fail;
  return rep;
}

nlohmann::json EstimateReport::to_json() const {
  return {{"check", "estimate"}, {"lhs", lhs}, {"rhs", rhs}, {"beta", beta}, {"verdict", verdict_str(pass)}};
}

EstimateReport stability_estimate_check(const BsdeProblem& base, const TerminalFn& terminal1,
                                        const TerminalFn& terminal2, const std::function<double(std::size_t)>& phi1,
                                        const std::function<double(std::size_t)>& phi2, double C, double tol) {
  if (!base.tree || !base.controls) throw BsdeError("estimate check needs a tree and controls");
  const MarkovTree& tree = *base.tree;
  BsdeProblem p1 = base, p2 = base;
  const DriverFn f = base.driver;
  p1.driver = [f, phi1](const DriverPoint& pt) { return f(pt) + phi1(pt.node); };
  p2.driver = [f, phi2](const DriverPoint& pt) { return f(pt) + phi2(pt.node); };
  p1.terminal = terminal1;
  p2.terminal = terminal2;
  const BsdeSolution s1 = solve_tree(p1);
  const BsdeSolution s2 = solve_tree(p2);
  const std::vector<double> prob = node_probabilities(tree, *base.controls);

  EstimateReport rep;
  rep.beta = 2.0 + 2.0 * C + 4.0 * C * C;
  const double dt = tree.dt(), t0 = tree.grid().t0, lam = tree.lambda();
  const int d = s1.d;
  const double dy0 = s1.Y[0] - s2.Y[0];
  double lhs = dy0 * dy0, rhs = 0.0;
  for (int k = 0; k < tree.M(); ++k) {
    const double w = dt * std::exp(rep.beta * (tree.grid().tau(k) - t0));
    double ey = 0.0, ek = 0.0, ephi = 0.0;
    for (int j = -k; j <= k; ++j) {
      for (int par = 0; par < 2; ++par) {
        const std::size_t id = MarkovTree::node_id(k, j, par);
        if (prob[id] == 0.0) continue;
        const double dy = s1.Y[id] - s2.Y[id];
        double dz2 = 0.0;
        for (int c = 0; c < d; ++c) {
          const double dz = s1.Zc(id, c) - s2.Zc(id, c);
          dz2 += dz * dz;
        }
        const double dk = s1.H[id] - s2.H[id];
        const double dphi = phi1(id) - phi2(id);
        ey += prob[id] * (dy * dy + dz2);
        ek += prob[id] * dk * dk;
        ephi += prob[id] * dphi * dphi;
      }
    }
    lhs += 0.5 * w * ey + 0.5 * lam * w * ek;
    rhs += w * ephi;
  }
  const int M = tree.M();
  double exi = 0.0;
  for (int j = -M; j <= M; ++j) {
    for (int par = 0; par < 2; ++par) {
      const std::size_t id = MarkovTree::node_id(M, j, par);
      if (prob[id] == 0.0) continue;
      const double dxi = s1.Y[id] - s2.Y[id];
      exi += prob[id] * dxi * dxi;
    }
  }
  rhs += std::exp(rep.beta * (tree.grid().T - t0)) * exi;
  rep.lhs = lhs;
  rep.rhs = rhs;
  rep.pass = lhs <= rhs + tol;
  return rep;
}

namespace {

// Monomials of total degree <= deg in n standardized coordinates.
std::vector<std::array<int, 3>> monomials(int n, int deg) {
  std::vector<std::array<int, 3>> out;
  for (int a = 0; a <= deg; ++a)
    for (int b = 0; b <= (n > 1 ? deg - a : 0); ++b)
      for (int c = 0; c <= (n > 2 ? deg - a - b : 0); ++c) out.push_back({a, b, c});
  return out;
}

struct Projection {
  Eigen::MatrixXd fitted;  // rows: group members, cols: targets
  double ridge = 0.0;
};

// Least-squares projection of `targets` (rows = members) on a polynomial basis.
Projection project(const std::vector<std::array<double, 3>>& xs, int n, int degree, const Eigen::MatrixXd& targets) {
  const auto count = static_cast<Eigen::Index>(xs.size());
  std::array<double, 3> mean{}, sd{};
  std::array<bool, 3> active{};
  int nact = 0;
  for (int c = 0; c < n; ++c) {
    double m = 0.0;
    for (const auto& x : xs) m += x[static_cast<std::size_t>(c)];
    m /= static_cast<double>(count);
    double v = 0.0;
    for (const auto& x : xs) v += (x[static_cast<std::size_t>(c)] - m) * (x[static_cast<std::size_t>(c)] - m);
    v = std::sqrt(v / static_cast<double>(count));
    mean[static_cast<std::size_t>(c)] = m;
    sd[static_cast<std::size_t>(c)] = v;
    active[static_cast<std::size_t>(c)] = v > 1e-12 * (1.0 + std::fabs(m));
    if (active[static_cast<std::size_t>(c)]) ++nact;
  }
  int deg = nact == 0 ? 0 : degree;
  auto mons = monomials(n, deg);
  while (deg > 0 && static_cast<Eigen::Index>(mons.size()) * 5 > count) mons = monomials(n, --deg);
  std::vector<std::array<int, 3>> basis;
  for (const auto& mo : mons) {
    bool ok = true;
    for (int c = 0; c < n; ++c)
      if (mo[static_cast<std::size_t>(c)] > 0 && !active[static_cast<std::size_t>(c)]) ok = false;
    if (ok) basis.push_back(mo);
  }
  const auto nb = static_cast<Eigen::Index>(basis.size());
  Eigen::MatrixXd A(count, nb);
  for (Eigen::Index r = 0; r < count; ++r) {
    for (Eigen::Index b = 0; b < nb; ++b) {
      double val = 1.0;
      for (int c = 0; c < n; ++c) {
        const int p = basis[static_cast<std::size_t>(b)][static_cast<std::size_t>(c)];
        if (p == 0) continue;
        const double s = (xs[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] - mean[static_cast<std::size_t>(c)]) /
                         sd[static_cast<std::size_t>(c)];
        val *= std::pow(s, p);
      }
      A(r, b) = val;
    }
  }
  Projection out;
  Eigen::MatrixXd G = A.transpose() * A;
  const Eigen::MatrixXd rhs = A.transpose() * targets;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
  const double rcond = ldlt.rcond();
  if (ldlt.info() != Eigen::Success || !(rcond > 1e-12)) {
    out.ridge = 1e-8 * std::max(1.0, G.trace() / static_cast<double>(nb));
    G.diagonal().array() += out.ridge;
    ldlt.compute(G);
  }
  const Eigen::MatrixXd coef = ldlt.solve(rhs);
  out.fitted = A * coef;
  return out;
}

}  // namespace

BsdeSolution solve_regression(const BsdeProblem& problem) {
  if (!problem.scenarios || !problem.path) throw BsdeError("regression mode needs scenarios and a state path");
  const ScenarioBundle& sc = *problem.scenarios;
  const StatePath& path = *problem.path;
  const int M = sc.grid.M, S = sc.S, d = sc.d, n = path.n;
  BsdeSolution sol;
  sol.mode = "regression";
  sol.M = M;
  sol.d = d;
  sol.S = S;
  const std::size_t total = static_cast<std::size_t>(M + 1) * S;
  sol.Y.assign(total, 0.0);
  sol.H.assign(total, 0.0);
  sol.Z.assign(total * static_cast<std::size_t>(d), 0.0);
  for (int s = 0; s < S; ++s) {
    const double* x = path.X_at(s, M);
    sol.Y[static_cast<std::size_t>(M) * S + s] =
        problem.terminal({x, static_cast<std::size_t>(n)}, path.regime(problem.start_regime, s, M), static_cast<std::size_t>(s));
  }
  const double dt = sc.grid.dt(), lam = sc.lambda;
  const double lam_dt = lam * dt;
  for (int k = M - 1; k >= 0; --k) {
    const double t = sc.grid.tau(k);
    for (int r = 1; r <= 2; ++r) {
      std::vector<int> members;
      for (int s = 0; s < S; ++s)
        if (path.regime(problem.start_regime, s, k) == r) members.push_back(s);
      if (members.empty()) continue;
      const auto cnt = static_cast<Eigen::Index>(members.size());
      std::vector<std::array<double, 3>> xs(members.size());
      Eigen::MatrixXd targets(cnt, 2 + d);
      for (Eigen::Index a = 0; a < cnt; ++a) {
        const int s = members[static_cast<std::size_t>(a)];
        const double* x = path.X_at(s, k);
        for (int c = 0; c < n; ++c) xs[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)] = x[c];
        const double y1 = sol.Y[static_cast<std::size_t>(k + 1) * S + s];
        targets(a, 0) = y1;
        targets(a, 1) = y1 * (sc.dN_at(s, k) - lam_dt);
        const double* db = sc.dB_at(s, k);
        for (int c = 0; c < d; ++c) targets(a, 2 + c) = y1 * db[c];
      }
      const Projection pr = project(xs, n, problem.degree, targets);
      sol.ridge = std::max(sol.ridge, pr.ridge);
      std::array<double, 3> z{};
      for (Eigen::Index a = 0; a < cnt; ++a) {
        const int s = members[static_cast<std::size_t>(a)];
        const std::size_t at = static_cast<std::size_t>(k) * S + s;
        const double E = pr.fitted(a, 0);
        const double H = lam_dt > 0.0 ? pr.fitted(a, 1) / lam_dt : 0.0;
        for (int c = 0; c < d; ++c) z[static_cast<std::size_t>(c)] = pr.fitted(a, 2 + c) / dt;
        DriverPoint pt;
        pt.k = k;
        pt.t = t;
        pt.x = {path.X_at(s, k), static_cast<std::size_t>(n)};
        pt.h = H;
        pt.z = {z.data(), static_cast<std::size_t>(d)};
        if (problem.spec && !path.u.empty()) {
          const std::size_t ci = static_cast<std::size_t>(s) * M + k;
          pt.u = problem.spec->U[static_cast<std::size_t>(path.u[ci])];
          pt.v = problem.spec->V[static_cast<std::size_t>(path.v[ci])];
        }
        pt.regime = r;
        pt.node = static_cast<std::size_t>(s);
        double Ystar, Y;
        if (problem.form == JumpForm::compensated) {
          pt.y = E - lam_dt * H;
          Ystar = E + dt * (problem.driver(pt) - lam * H);
          pt.y = Ystar;
          Y = E + dt * (problem.driver(pt) - lam * H);
        } else {
          pt.y = E;
          Ystar = E + dt * problem.driver(pt);
          pt.y = Ystar;
          Y = E + dt * problem.driver(pt);
        }
        sol.Y[at] = Y;
        sol.H[at] = H;
        for (int c = 0; c < d; ++c) sol.Z[at * static_cast<std::size_t>(d) + c] = z[static_cast<std::size_t>(c)];
      }
    }
  }
  if (S > 1) {
    double m = 0.0, v = 0.0;
    for (int s = 0; s < S; ++s) m += sol.Y[static_cast<std::size_t>(M > 0 ? 1 : 0) * S + s];
    m /= S;
    for (int s = 0; s < S; ++s) {
      const double e = sol.Y[static_cast<std::size_t>(M > 0 ? 1 : 0) * S + s] - m;
      v += e * e;
    }
    sol.root_se = std::sqrt(v / (S - 1) / S);
  }
  return sol;
}

void write_solution_csv(std::ostream& os, const BsdeSolution& sol, const MarkovTree* tree, const StatePath* path,
                        int start_regime) {
  os << "mode,component,k,t,node_or_scenario,x,regime,Y,Z,H\n";
  auto zvec = [&](std::size_t at) {
    std::vector<double> z(static_cast<std::size_t>(sol.d));
    for (int c = 0; c < sol.d; ++c) z[static_cast<std::size_t>(c)] = sol.Zc(at, c);
    return csv_vector(z);
  };
  if (sol.mode == "tree" && tree) {
    for (int k = 0; k <= tree->M(); ++k) {
      for (int j = -k; j <= k; ++j) {
        for (int par = 0; par < 2; ++par) {
          if (!tree->parity_reachable(k, par)) continue;
          const std::size_t id = MarkovTree::node_id(k, j, par);
          os << sol.mode << ',' << csv_quote(sol.component) << ',' << k << ',' << fmt_num(tree->grid().tau(k)) << ','
             << id << ',' << fmt_num(tree->x(k, j)) << ',' << regime_at(start_regime, par) << ','
             << fmt_num(sol.Y[id]) << ',' << zvec(id) << ',' << fmt_num(sol.H[id]) << '\n';
        }
      }
    }
  } else if (path) {
    for (int k = 0; k <= sol.M; ++k) {
      for (int s = 0; s < sol.S; ++s) {
        const std::size_t at = static_cast<std::size_t>(k) * sol.S + s;
        std::vector<double> xs(path->X_at(s, k), path->X_at(s, k) + path->n);
        os << sol.mode << ',' << csv_quote(sol.component) << ',' << k << ',' << fmt_num(path->grid.tau(k)) << ',' << s
           << ',' << csv_vector(xs) << ',' << path->regime(start_regime, s, k) << ',' << fmt_num(sol.Y[at]) << ','
           << zvec(at) << ',' << fmt_num(sol.H[at]) << '\n';
      }
    }
  }
}

}  // namespace nsdg
