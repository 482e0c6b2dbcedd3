#include "nsdg/game.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nsdg/io.hpp"

namespace nsdg {

double game_step(const GameSpec& spec, const MarkovTree& tree, int k, int j, int regime, int iu, int iv,
                 const double* nj, const double* jp) {
  const double x = tree.x(k, j);
  const double u = spec.U[static_cast<std::size_t>(iu)], v = spec.V[static_cast<std::size_t>(iv)];
  const Transition tr = tree.transition(k, x, u, v);
  const DecoupledDriver f(spec, regime);
  const double t = tree.grid().tau(k);
  return tree_step(tr, tree.q(), tree.dt(), tree.lambda(), nj, jp, spec.brownian_dim, JumpForm::compensated,
                   [&](double y, double h, std::span<const double> z) { return f(t, {&x, 1}, y, h, z, u, v); })
      .Y;
}

// ---------------------------------------------------------------------------

int CellMap::cell(int k, double x) const {
  const long c = std::lround((x - tree->center(k)) / tree->h());
  return static_cast<int>(std::clamp<long>(c, -k, k));
}

int FeedbackStrategy::control(const History& h) const {
  const int j = std::clamp(h.now.j, -h.now.k, h.now.k);
  return table_[MarkovTree::node_id(h.now.k, j, h.now.parity)];
}

Stepper lattice_stepper(const MarkovTree& tree, std::uint64_t seed, int scenario) {
  const MarkovTree* t = &tree;
  return [t, seed, scenario](const PlayState& s, int iu, int iv) {
    CounterRng rng(seed, static_cast<std::uint64_t>(scenario), static_cast<std::uint64_t>(s.k));
    const double a = rng.uniform(), b = rng.uniform();
    const Transition tr = t->transition_at(s.k, s.x, iu, iv);
    const int m = a < tr.p[0] ? -1 : (a < tr.p[0] + tr.p[1] ? 0 : 1);
    PlayState n;
    n.k = s.k + 1;
    n.j = s.j + m;
    n.parity = s.parity ^ (b < t->q() ? 1 : 0);
    n.x = t->x(n.k, n.j);
    return n;
  };
}

Stepper euler_stepper(const GameSpec& spec, const ScenarioBundle& sc, int scenario, const MarkovTree& cells) {
  const GameSpec* g = &spec;
  const ScenarioBundle* b = &sc;
  const CellMap map{&cells};
  return [g, b, scenario, map](const PlayState& s, int iu, int iv) {
    const double u = g->U[static_cast<std::size_t>(iu)], v = g->V[static_cast<std::size_t>(iv)];
    const double t = b->grid.tau(s.k);
    const double* dB = b->dB_at(scenario, s.k);
    double x = s.x + g->b1(t, s.x, u, v) * b->grid.dt();
    for (int c = 0; c < b->d; ++c) x += g->sigma(0, c, t, {&s.x, 1}, u, v) * dB[c];
    PlayState n;
    n.k = s.k + 1;
    n.x = x;
    n.parity = s.parity ^ (b->dN_at(scenario, s.k) & 1);
    n.j = map.cell(n.k, x);
    return n;
  };
}

PlayPath pair_fixed_point(const Strategy& alpha, const Strategy& beta, const PlayState& start, int M,
                          const Stepper& step) {
  PlayPath p;
  p.states.reserve(static_cast<std::size_t>(M + 1));
  p.states.push_back(start);
  p.u.reserve(static_cast<std::size_t>(M));
  p.v.reserve(static_cast<std::size_t>(M));
  for (int k = 0; k < M; ++k) {
    const std::span<const PlayState> states(p.states.data(), p.states.size());
    const History ha{p.states.back(), states, {p.u.data(), p.u.size()}, {p.v.data(), p.v.size()}};
    const History hb{p.states.back(), states, {p.v.data(), p.v.size()}, {p.u.data(), p.u.size()}};
    // Both read controls through k-1 only, so the step-k pair is determined.
    const int uk = alpha.control(ha);
    const int vk = beta.control(hb);
    p.u.push_back(uk);
    p.v.push_back(vk);
    p.states.push_back(step(p.states.back(), uk, vk));
  }
  return p;
}

// ---------------------------------------------------------------------------

TreeValueResult tree_value(const GameSpec& spec, const MarkovTree& tree, const Orientation& o,
                           const RegimeTerminal& terminal) {
  TreeValueResult res;
  res.orientation = o;
  const int M = tree.M();
  res.M = M;
  const std::size_t n = spatial_id(M + 1, -(M + 1));
  for (int r = 0; r < 2; ++r) {
    res.V[r].assign(n, 0.0);
    res.iu[r].assign(n, 0);
    res.iv[r].assign(n, 0);
  }
  for (int j = -M; j <= M; ++j) {
    const double x = tree.x(M, j);
    for (int r = 1; r <= 2; ++r) {
      res.V[r - 1][spatial_id(M, j)] = terminal ? terminal(r, x) : spec.terminal(r, {&x, 1});
    }
  }
  const int nu = static_cast<int>(spec.U.size()), nv = static_cast<int>(spec.V.size());
  std::vector<double> h(static_cast<std::size_t>(nu * nv));
  const MinimaxOrder order = o.order();
  double nj[3], jp[3];
  for (int k = M - 1; k >= 0; --k) {
    for (int j = -k; j <= k; ++j) {
      for (int r = 1; r <= 2; ++r) {
        for (int m = -1; m <= 1; ++m) {
          nj[m + 1] = res.V[r - 1][spatial_id(k + 1, j + m)];
          jp[m + 1] = res.V[2 - r][spatial_id(k + 1, j + m)];
        }
        for (int a = 0; a < nu; ++a)
          for (int b = 0; b < nv; ++b) h[static_cast<std::size_t>(a * nv + b)] = game_step(spec, tree, k, j, r, a, b, nj, jp);
        const MinimaxResult mm = minimax(h, nu, nv, order);
        const std::size_t id = spatial_id(k, j);
        res.V[r - 1][id] = mm.value;
        res.iu[r - 1][id] = mm.iu;
        res.iv[r - 1][id] = mm.iv;
      }
    }
  }
  return res;
}

BruteForceResult brute_force_value(const GameSpec& spec, const MarkovTree& tree, int favor, int start) {
  const int M = tree.M();
  const int nu = static_cast<int>(spec.U.size()), nv = static_cast<int>(spec.V.size());
  if (M > 2 || nu > 2 || nv > 2) throw GameError("brute force is limited to M <= 2 and |U|, |V| <= 2");
  BruteForceResult out;
  auto terminal = [&](int k, int j, int parity) {
    const double x = tree.x(k, j);
    return spec.terminal(regime_at(start, parity), {&x, 1});
  };
  double nj[3], jp[3];
  if (M == 1) {
    for (int m = -1; m <= 1; ++m) {
      nj[m + 1] = terminal(1, m, 0);
      jp[m + 1] = terminal(1, m, 1);
    }
    // Strategies are the root controls; no observation is possible yet.
    const int no = favor == 1 ? nu : nv, ni = favor == 1 ? nv : nu;
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < no; ++a) {
      double worst = std::numeric_limits<double>::infinity();
      for (int b = 0; b < ni; ++b) {
        const int iu = favor == 1 ? a : b, iv = favor == 1 ? b : a;
        worst = std::min(worst, game_step(spec, tree, 0, 0, start, iu, iv, nj, jp));
      }
      best = std::max(best, worst);
    }
    out.value = best;
    out.outer_count = static_cast<std::size_t>(no);
    out.inner_count = static_cast<std::size_t>(ni);
    return out;
  }

  // Level-1 nodes n = 2 (m + 1) + parity; Y1[n][iu][iv] with terminal children.
  constexpr int kNodes = 6;
  std::vector<double> Y1(static_cast<std::size_t>(kNodes * nu * nv));
  for (int m = -1; m <= 1; ++m) {
    for (int par = 0; par < 2; ++par) {
      double cn[3], cj[3];
      for (int c = -1; c <= 1; ++c) {
        cn[c + 1] = terminal(2, m + c, par);
        cj[c + 1] = terminal(2, m + c, 1 - par);
      }
      const int n = 2 * (m + 1) + par;
      for (int a = 0; a < nu; ++a)
        for (int b = 0; b < nv; ++b)
          Y1[static_cast<std::size_t>((n * nu + a) * nv + b)] =
              game_step(spec, tree, 1, m, regime_at(start, par), a, b, cn, cj);
    }
  }
  auto ipow = [](int b, int e) {
    int r = 1;
    for (int i = 0; i < e; ++i) r *= b;
    return r;
  };
  const int cu = ipow(nu, kNodes), cv = ipow(nv, kNodes);  // node maps for u and v
  // R[u0][v0][A][B]: root value when the level-1 controls are A(n) and B(n).
  std::vector<double> R(static_cast<std::size_t>(nu) * nv * cu * cv);
  for (int u0 = 0; u0 < nu; ++u0) {
    for (int v0 = 0; v0 < nv; ++v0) {
      for (int A = 0; A < cu; ++A) {
        for (int B = 0; B < cv; ++B) {
          int a = A, b = B;
          double child[kNodes];
          for (int n = 0; n < kNodes; ++n) {
            child[n] = Y1[static_cast<std::size_t>((n * nu + a % nu) * nv + b % nv)];
            a /= nu;
            b /= nv;
          }
          for (int m = -1; m <= 1; ++m) {
            nj[m + 1] = child[2 * (m + 1)];
            jp[m + 1] = child[2 * (m + 1) + 1];
          }
          R[((static_cast<std::size_t>(u0) * nv + v0) * cu + A) * cv + B] = game_step(spec, tree, 0, 0, start, u0, v0, nj, jp);
        }
      }
    }
  }
  // α = (u0, A_v for each observed v0); β = (v0, B_u for each observed u0).
  const std::size_t na = static_cast<std::size_t>(nu) * ipow(cu, nv);
  const std::size_t nb = static_cast<std::size_t>(nv) * ipow(cv, nu);
  auto decode = [](std::size_t idx, int first, int code, int count, std::vector<int>& maps) {
    const int head = static_cast<int>(idx % static_cast<std::size_t>(first));
    idx /= static_cast<std::size_t>(first);
    for (int c = 0; c < count; ++c) {
      maps[static_cast<std::size_t>(c)] = static_cast<int>(idx % static_cast<std::size_t>(code));
      idx /= static_cast<std::size_t>(code);
    }
    return head;
  };
  std::vector<int> amap(static_cast<std::size_t>(nv)), bmap(static_cast<std::size_t>(nu));
  std::vector<int> bhead(nb);
  std::vector<std::vector<int>> bmaps(nb, std::vector<int>(static_cast<std::size_t>(nu)));
  for (std::size_t ib = 0; ib < nb; ++ib) bhead[ib] = decode(ib, nv, cv, nu, bmaps[ib]);
  auto J = [&](int u0, const std::vector<int>& am, int v0, const std::vector<int>& bm) {
    return R[((static_cast<std::size_t>(u0) * nv + v0) * cu + am[static_cast<std::size_t>(v0)]) * cv +
             bm[static_cast<std::size_t>(u0)]];
  };
  double best = -std::numeric_limits<double>::infinity();
  if (favor == 1) {
    for (std::size_t ia = 0; ia < na; ++ia) {
      const int u0 = decode(ia, nu, cu, nv, amap);
      double worst = std::numeric_limits<double>::infinity();
      for (std::size_t ib = 0; ib < nb; ++ib) worst = std::min(worst, J(u0, amap, bhead[ib], bmaps[ib]));
      best = std::max(best, worst);
    }
    out.outer_count = na;
    out.inner_count = nb;
  } else {
    std::vector<int> ahead(na);
    std::vector<std::vector<int>> amaps(na, std::vector<int>(static_cast<std::size_t>(nv)));
    for (std::size_t ia = 0; ia < na; ++ia) ahead[ia] = decode(ia, nu, cu, nv, amaps[ia]);
    for (std::size_t ib = 0; ib < nb; ++ib) {
      double worst = std::numeric_limits<double>::infinity();
      for (std::size_t ia = 0; ia < na; ++ia) worst = std::min(worst, J(ahead[ia], amaps[ia], bhead[ib], bmaps[ib]));
      best = std::max(best, worst);
    }
    out.outer_count = nb;
    out.inner_count = na;
  }
  out.value = best;
  return out;
}

// ---------------------------------------------------------------------------

FieldSet FieldSet::from_tree(const MarkovTree& tree, TreeValueResult p1, TreeValueResult p2) {
  FieldSet f;
  f.tree_ = &tree;
  f.tv_ = std::make_shared<const std::array<TreeValueResult, 2>>(std::array<TreeValueResult, 2>{std::move(p1), std::move(p2)});
  return f;
}

FieldSet FieldSet::from_pde(ValueField p1, ValueField p2, int steps_per_level) {
  FieldSet f;
  f.pde_ = std::make_shared<const std::array<ValueField, 2>>(std::array<ValueField, 2>{std::move(p1), std::move(p2)});
  f.steps_ = steps_per_level;
  return f;
}

double FieldSet::value(int favor, int regime, int k, double x, bool* outside) const {
  if (tree_) {
    const int j = CellMap{tree_}.cell(k, x);
    return (*tv_)[static_cast<std::size_t>(favor - 1)].V[static_cast<std::size_t>(regime - 1)][spatial_id(k, j)];
  }
  const ValueField& f = (*pde_)[static_cast<std::size_t>(favor - 1)];
  if (!f.inside(x)) {
    if (outside) *outside = true;
    x = std::clamp(x, f.space.x_min, f.space.x_max);
  }
  return f.interp(regime - 1, k * steps_, x);
}

namespace {

void require_bounded(const GameSpec& spec) {
  if (!spec.coefficient_bound) throw GameError("the Nash construction requires a declared coefficient_bound");
}

// Field values at the six children of (k, j) for orientation `favor`,
// current regime r: no-jump children stay in r, jumped ones move to r'.
void field_children(const FieldSet& F, const MarkovTree& tree, int favor, int r, int k, int j, double* nj,
                    double* jp) {
  for (int m = -1; m <= 1; ++m) {
    const double x = tree.x(k + 1, j + m);
    nj[m + 1] = F.value(favor, r, k + 1, x);
    jp[m + 1] = F.value(favor, other_regime(r), k + 1, x);
  }
}

}  // namespace

nlohmann::json EpsPair::to_json() const {
  return {{"max_drop", max_drop},
          {"cumulative_bound", cumulative_bound},
          {"player_drop", {player_drop[0], player_drop[1]}}};
}

EpsPair build_eps_pair(const GameSpec& spec, const MarkovTree& tree, const FieldSet& F) {
  require_bounded(spec);
  EpsPair out;
  out.controls = TreeControls::constant(tree, 0, 0);
  const int nu = static_cast<int>(spec.U.size()), nv = static_cast<int>(spec.V.size());
  out.max_drop = -std::numeric_limits<double>::infinity();
  out.player_drop = {-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  double n1[3], j1[3], n2[3], j2[3];
  for (int k = 0; k < tree.M(); ++k) {
    for (int j = -k; j <= k; ++j) {
      const double x = tree.x(k, j);
      for (int par = 0; par < 2; ++par) {
        if (!tree.parity_reachable(k, par)) continue;
        const int r1 = player_regime(1, par), r2 = player_regime(2, par);
        field_children(F, tree, 1, r1, k, j, n1, j1);
        field_children(F, tree, 2, r2, k, j, n2, j2);
        const double f1 = F.value(1, r1, k, x), f2 = F.value(2, r2, k, x);
        double best = std::numeric_limits<double>::infinity(), bd1 = 0.0, bd2 = 0.0;
        int bu = 0, bv = 0;
        for (int a = 0; a < nu; ++a) {
          for (int b = 0; b < nv; ++b) {
            const double d1 = f1 - game_step(spec, tree, k, j, r1, a, b, n1, j1);
            const double d2 = f2 - game_step(spec, tree, k, j, r2, a, b, n2, j2);
            const double score = std::max(d1, d2);
            if (score < best - 1e-12) {
              best = score;
              bu = a;
              bv = b;
              bd1 = d1;
              bd2 = d2;
            }
          }
        }
        const std::size_t id = MarkovTree::node_id(k, j, par);
        out.controls.u[id] = bu;
        out.controls.v[id] = bv;
        out.max_drop = std::max(out.max_drop, best);
        out.player_drop[0] = std::max(out.player_drop[0], bd1);
        out.player_drop[1] = std::max(out.player_drop[1], bd2);
      }
    }
  }
  out.cumulative_bound = tree.M() * std::max(out.max_drop, 0.0);
  return out;
}

// ---------------------------------------------------------------------------

PunishmentStrategy::PunishmentStrategy(int punisher, const TreeControls& nominal, std::vector<int> table)
    : side_(punisher), nominal_(nominal), punish_(std::move(table)) {
  if (punisher != 1 && punisher != 2) throw GameError("punisher must be player 1 or 2");
}

int PunishmentStrategy::detection(const History& h) const {
  for (int k = 0; k < h.now.k; ++k) {
    const PlayState& s = h.states[static_cast<std::size_t>(k)];
    const std::size_t id = MarkovTree::node_id(s.k, std::clamp(s.j, -s.k, s.k), s.parity);
    const int expected = side_ == 1 ? nominal_.v[id] : nominal_.u[id];
    if (h.opponent[static_cast<std::size_t>(k)] != expected) return k;
  }
  return -1;
}

int PunishmentStrategy::control(const History& h) const {
  const std::size_t id = MarkovTree::node_id(h.now.k, std::clamp(h.now.j, -h.now.k, h.now.k), h.now.parity);
  if (detection(h) >= 0) return punish_[id];
  return side_ == 1 ? nominal_.u[id] : nominal_.v[id];
}

std::vector<int> punishment_table(const GameSpec& spec, const MarkovTree& tree, const FieldSet& F, int punished) {
  if (punished != 1 && punished != 2) throw GameError("punished player must be 1 or 2");
  std::vector<int> table(tree.node_count(), 0);
  const int nu = static_cast<int>(spec.U.size()), nv = static_cast<int>(spec.V.size());
  double nj[3], jp[3];
  for (int k = 0; k < tree.M(); ++k) {
    for (int j = -k; j <= k; ++j) {
      for (int par = 0; par < 2; ++par) {
        const int r = player_regime(punished, par);
        field_children(F, tree, punished, r, k, j, nj, jp);
        // Punisher minimizes the deviator's best one-step value.
        const int no = punished == 2 ? nu : nv, ni = punished == 2 ? nv : nu;
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (int a = 0; a < no; ++a) {
          double worst = -std::numeric_limits<double>::infinity();
          for (int b = 0; b < ni; ++b) {
            const int iu = punished == 2 ? a : b, iv = punished == 2 ? b : a;
            worst = std::max(worst, game_step(spec, tree, k, j, r, iu, iv, nj, jp));
          }
          if (worst < best) {
            best = worst;
            arg = a;
          }
        }
        table[MarkovTree::node_id(k, j, par)] = arg;
      }
    }
  }
  return table;
}

std::vector<int> deviation_table(const GameSpec& spec, const MarkovTree& tree, const FieldSet& F,
                                 const std::vector<int>& punish, int deviator) {
  std::vector<int> table(tree.node_count(), 0);
  const int nu = static_cast<int>(spec.U.size()), nv = static_cast<int>(spec.V.size());
  double nj[3], jp[3];
  for (int k = 0; k < tree.M(); ++k) {
    for (int j = -k; j <= k; ++j) {
      for (int par = 0; par < 2; ++par) {
        const int r = player_regime(deviator, par);
        field_children(F, tree, deviator, r, k, j, nj, jp);
        const std::size_t id = MarkovTree::node_id(k, j, par);
        const int n = deviator == 2 ? nv : nu;
        double best = -std::numeric_limits<double>::infinity();
        int arg = 0;
        for (int b = 0; b < n; ++b) {
          const int iu = deviator == 2 ? punish[id] : b, iv = deviator == 2 ? b : punish[id];
          const double val = game_step(spec, tree, k, j, r, iu, iv, nj, jp);
          if (val > best) {
            best = val;
            arg = b;
          }
        }
        table[id] = arg;
      }
    }
  }
  return table;
}

PunishmentStrategy build_punishment(const GameSpec& spec, const MarkovTree& tree, const FieldSet& fields,
                                    const TreeControls& nominal, int punished) {
  return PunishmentStrategy(3 - punished, nominal, punishment_table(spec, tree, fields, punished));
}

// ---------------------------------------------------------------------------

WilsonInterval wilson(std::size_t s, std::size_t n, double z) {
  if (n == 0) return {0.0, 1.0};
  const double N = static_cast<double>(n), p = static_cast<double>(s) / N;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / N;
  const double centre = (p + z2 / (2.0 * N)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / N + z2 / (4.0 * N * N)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

double wilson_floor(int scenarios) {
  return 1.0 - wilson(static_cast<std::size_t>(scenarios), static_cast<std::size_t>(scenarios)).low;
}

nlohmann::json NashCertificate::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : per_delta) {
    rows.push_back({{"k", r.k}, {"j", r.j}, {"p_hat", r.p_hat}, {"ci_low", r.ci_low}, {"pass", r.pass}});
  }
  return {{"epsilon", epsilon},
          {"e1", e[0]},
          {"e2", e[1]},
          {"e1_se", se[0]},
          {"e2_se", se[1]},
          {"target", {target[0], target[1]}},
          {"per_delta", rows},
          {"payoff_gap", payoff_gap},
          {"max_violation", max_violation},
          {"excluded", excluded},
          {"field_source", field_source},
          {"verdict", verdict_str(pass)},
          {"seed", seed},
          {"scenario_count", scenario_count}};
}

NashCertificate nash_characterization_check(const GameSpec& spec, const MarkovTree& tree, const TreeControls& pair,
                                            double epsilon, const FieldSet& F, const NashCheckOptions& opt) {
  require_bounded(spec);
  if (opt.scenarios < 2) throw GameError("nash check needs at least 2 scenarios");
  const int M = tree.M();
  std::array<BsdeSolution, 2> sol = {solve_tree(decoupled_problem(spec, tree, pair, 1)),
                                     solve_tree(decoupled_problem(spec, tree, pair, 2))};
  // Per-node increment D = Y - E[Y_{k+1} | node]; Φ + ΣD has mean Y_0.
  std::array<std::vector<double>, 2> D;
  for (int c = 0; c < 2; ++c) D[c].assign(tree.node_count(), 0.0);
  double nj[3], jp[3];
  for (int k = 0; k < M; ++k) {
    for (int j = -k; j <= k; ++j) {
      for (int par = 0; par < 2; ++par) {
        const std::size_t id = MarkovTree::node_id(k, j, par);
        const Transition tr = tree.transition_at(k, tree.x(k, j), pair.u[id], pair.v[id]);
        for (int c = 0; c < 2; ++c) {
          gather_children(sol[c].Y, sol[c].Y, k, j, par, nj, jp);
          const double yn = nj[1] + tr.p[0] * (nj[0] - nj[1]) + tr.p[2] * (nj[2] - nj[1]);
          const double yj = jp[1] + tr.p[0] * (jp[0] - jp[1]) + tr.p[2] * (jp[2] - jp[1]);
          D[c][id] = sol[c].Y[id] - (yn + tree.q() * (yj - yn));
        }
      }
    }
  }

  NashCertificate cert;
  cert.epsilon = epsilon;
  cert.seed = opt.seed;
  cert.scenario_count = opt.scenarios;
  cert.field_source = F.source();
  std::vector<std::size_t> hits(static_cast<std::size_t>(2 * (M + 1)), 0);
  std::array<double, 2> sum{}, sum2{};
  std::size_t used = 0;
  std::vector<std::size_t> path(static_cast<std::size_t>(M + 1));
  std::vector<PlayState> states(static_cast<std::size_t>(M + 1));
  for (int s = 0; s < opt.scenarios; ++s) {
    const Stepper step = lattice_stepper(tree, opt.seed, s);
    PlayState st;
    st.x = tree.x0();
    for (int k = 0;; ++k) {
      states[static_cast<std::size_t>(k)] = st;
      path[static_cast<std::size_t>(k)] = MarkovTree::node_id(k, st.j, st.parity);
      if (k == M) break;
      const std::size_t id = path[static_cast<std::size_t>(k)];
      st = step(st, pair.u[id], pair.v[id]);
    }
    bool outside = false;
    std::vector<char> ok(hits.size(), 0);
    for (int k = 0; k <= M; ++k) {
      const PlayState& ps = states[static_cast<std::size_t>(k)];
      const std::size_t id = path[static_cast<std::size_t>(k)];
      for (int c = 0; c < 2; ++c) {
        const int r = player_regime(c + 1, ps.parity);
        const double w = F.value(c + 1, r, k, ps.x, &outside);
        ok[static_cast<std::size_t>(2 * k + c)] = sol[c].Y[id] >= w - epsilon;
      }
    }
    if (outside) {
      ++cert.excluded;
      continue;
    }
    ++used;
    for (std::size_t i = 0; i < hits.size(); ++i) hits[i] += ok[i] ? 1 : 0;
    // Accumulated relative to the root so that a constant payoff is exact.
    for (int c = 0; c < 2; ++c) {
      double L = sol[c].Y[path[static_cast<std::size_t>(M)]] - sol[c].root();
      for (int k = 0; k < M; ++k) L += D[c][path[static_cast<std::size_t>(k)]];
      sum[c] += L;
      sum2[c] += L * L;
    }
  }
  bool all = used > 0;
  for (int k = 0; k <= M; ++k) {
    for (int c = 0; c < 2; ++c) {
      DeltaRow row;
      row.k = k;
      row.j = c + 1;
      const std::size_t h = hits[static_cast<std::size_t>(2 * k + c)];
      row.p_hat = used ? static_cast<double>(h) / static_cast<double>(used) : 0.0;
      row.ci_low = wilson(h, used).low;
      row.pass = row.ci_low >= 1.0 - epsilon;
      all = all && row.pass;
      cert.max_violation = std::max(cert.max_violation, 1.0 - row.p_hat);
      cert.per_delta.push_back(row);
    }
  }
  for (int c = 0; c < 2; ++c) {
    const double n = static_cast<double>(std::max<std::size_t>(used, 1));
    const double mean = sum[c] / n;
    const double var = used > 1 ? std::max(0.0, (sum2[c] - n * mean * mean) / (n - 1.0)) : 0.0;
    cert.e[c] = sol[c].root() + mean;
    cert.se[c] = std::sqrt(var / n);
    cert.target[c] = opt.target ? (*opt.target)[static_cast<std::size_t>(c)] : sol[c].root();
    const double gap = std::fabs(cert.e[c] - cert.target[c]);
    cert.payoff_gap = std::max(cert.payoff_gap, gap);
    all = all && gap <= epsilon + 3.0 * cert.se[c];
  }
  cert.pass = all;
  return cert;
}

nlohmann::json NashPayoff::to_json() const {
  nlohmann::json certs = nlohmann::json::array();
  for (const auto& c : certificates) certs.push_back(c.to_json());
  nlohmann::json ca = nlohmann::json::array();
  for (const auto& c : cauchy) ca.push_back({c[0], c[1]});
  return {{"e1", e[0]},      {"e2", e[1]},          {"e1_se", se[0]},   {"e2_se", se[1]},
          {"epsilon", epsilon}, {"verdict", verdict_str(pass)}, {"pair", pair.to_json()},
          {"cauchy", ca},    {"certificates", certs}};
}

NashPayoff extract_nash_payoff(const GameSpec& spec, const MarkovTree& tree, const FieldSet& fields,
                               const std::vector<double>& schedule, const NashCheckOptions& opt) {
  if (schedule.empty()) throw GameError("empty epsilon schedule");
  NashPayoff out;
  out.pair = build_eps_pair(spec, tree, fields);
  for (double eps : schedule) {
    out.certificates.push_back(nash_characterization_check(spec, tree, out.pair.controls, eps, fields, opt));
  }
  for (std::size_t i = 1; i < out.certificates.size(); ++i) {
    const auto& a = out.certificates[i - 1];
    const auto& b = out.certificates[i];
    out.cauchy.push_back({std::fabs(a.e[0] - b.e[0]), std::fabs(a.e[1] - b.e[1])});
  }
  const NashCertificate* chosen = &out.certificates.back();
  for (const auto& c : out.certificates) {
    if (c.pass && (!out.pass || c.epsilon < chosen->epsilon)) {
      chosen = &c;
      out.pass = true;
    }
  }
  out.e = chosen->e;
  out.se = chosen->se;
  out.epsilon = chosen->epsilon;
  return out;
}

// ---------------------------------------------------------------------------

nlohmann::json DppReport::to_json() const {
  nlohmann::json vals = nlohmann::json::array();
  for (const auto& l : levels) {
    vals.push_back({{"J", l.J}, {"M", l.M_pde}, {"tree_steps", l.tree_steps}, {"residual", l.residual},
                    {"excluded", l.excluded}});
  }
  return {{"check", "dpp"}, {"statistic", "max_abs_residual"}, {"values_by_grid", vals},
          {"t", t},         {"x", xs},                          {"delta", delta},
          {"verdict", verdict}};
}

DppLevel dpp_residual(const GameSpec& spec, const ValueField& p1, const ValueField& p2, int k, double x,
                      int delta_steps, int tree_steps) {
  DppLevel lev;
  lev.J = p1.space.J;
  lev.M_pde = p1.time.M;
  lev.tree_steps = tree_steps;
  if (delta_steps == 0) return lev;
  const double t = p1.time.tau(k), te = p1.time.tau(k + delta_steps);
  // The sub-tree needs its own horizon; the game's T is only read for it.
  const TimeGrid sub(t, te, tree_steps);
  const MarkovTree tree(spec, sub, spec.lambda, x);
  const ValueField* fields[2] = {&p1, &p2};
  for (int favor = 1; favor <= 2; ++favor) {
    const ValueField& f = *fields[favor - 1];
    auto terminal = [&](int r, double xe) {
      if (!f.inside(xe)) {
        ++lev.excluded;
        xe = std::clamp(xe, f.space.x_min, f.space.x_max);
      }
      return f.interp(r - 1, k + delta_steps, xe);
    };
    const TreeValueResult tv = tree_value(spec, tree, {false, favor}, terminal);
    for (int r = 1; r <= 2; ++r) lev.residual = std::max(lev.residual, std::fabs(tv.root(r) - f.interp(r - 1, k, x)));
  }
  return lev;
}

DppReport dpp_check(const GameSpec& spec, const DppOptions& opt) {
  DppReport rep;
  rep.t = opt.t0;
  rep.xs = opt.xs;
  rep.delta = opt.delta_fraction * (spec.T - opt.t0);
  const int per = static_cast<int>(std::lround(1.0 / opt.delta_fraction));
  int M0 = 0;
  std::vector<double> res;
  for (int l = 0; l < opt.levels; ++l) {
    const int J = (opt.J0 + 1) * (1 << l) - 1;
    const SpaceGrid grid(opt.x_min, opt.x_max, J);
    if (l == 0) {
      M0 = cfl_min_steps(spec, grid, opt.t0);
      M0 = ((M0 + per - 1) / per) * per;
    }
    const int M = M0 * (1 << (2 * l));
    const TimeGrid time(opt.t0, spec.T, M);
    const ValueField p1 = solve_coupled_isaacs(spec, grid, time, {false, 1});
    const ValueField p2 = solve_coupled_isaacs(spec, grid, time, {false, 2});
    DppLevel lev;
    for (double x : opt.xs) {
      const DppLevel one = dpp_residual(spec, p1, p2, 0, x, M / per, opt.tree_steps0 * (1 << l));
      lev.J = one.J;
      lev.M_pde = one.M_pde;
      lev.tree_steps = one.tree_steps;
      lev.residual = std::max(lev.residual, one.residual);
      lev.excluded += one.excluded;
    }
    res.push_back(lev.residual);
    rep.levels.push_back(lev);
  }
  bool ok = true;
  for (std::size_t i = 1; i < res.size(); ++i) {
    if (res[i] <= 1e-10) continue;
    if (res[i - 1] / res[i] < 1.5) ok = false;
  }
  rep.verdict = ok ? "PASS" : "FAIL";
  return rep;
}

}  // namespace nsdg
