#include "nsdg/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "nsdg/io.hpp"

namespace nsdg {

namespace {

std::uint64_t splitmix(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

TimeGrid::TimeGrid(double t0_, double T_, int M_) : t0(t0_), T(T_), M(M_) {
  if (M < 1) throw DynamicsError("time grid needs M >= 1");
  if (!(T > t0)) throw DynamicsError("time grid needs T > t0");
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t scenario, std::uint64_t step)
    : state_(splitmix(splitmix(splitmix(seed) ^ scenario) ^ (step * 0xD1B54A32D192ED03ULL))) {}

CounterRng::result_type CounterRng::operator()() {
  state_ += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double CounterRng::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

ScenarioBundle sample_scenarios(const TimeGrid& grid, double lambda, int S, std::uint64_t seed, int brownian_dim,
                                std::ostream* warn) {
  if (S < 1) throw DynamicsError("scenario count must be >= 1");
  if (lambda * grid.dt() >= 1.0 && warn) {
    *warn << "warning: lambda*dt = " << lambda * grid.dt() << " >= 1\n";
  }
  ScenarioBundle b;
  b.grid = grid;
  b.lambda = lambda;
  b.S = S;
  b.d = brownian_dim;
  b.seed = seed;
  const auto steps = static_cast<std::size_t>(S) * static_cast<std::size_t>(grid.M);
  b.dB.resize(steps * static_cast<std::size_t>(brownian_dim));
  b.dN.resize(steps);
  const double sd = std::sqrt(grid.dt());
  const double mean_jumps = lambda * grid.dt();
  for (int s = 0; s < S; ++s) {
    for (int k = 0; k < grid.M; ++k) {
      CounterRng rng(seed, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(k));
      std::normal_distribution<double> normal(0.0, sd);
      const std::size_t at = static_cast<std::size_t>(s) * grid.M + k;
      for (int c = 0; c < brownian_dim; ++c) b.dB[at * brownian_dim + c] = normal(rng);
      if (mean_jumps > 0.0) {
        std::poisson_distribution<int> pois(mean_jumps);
        b.dN[at] = pois(rng);
      } else {
        b.dN[at] = 0;
      }
    }
  }
  return b;
}

MarkovTree::MarkovTree(const GameSpec& spec, const TimeGrid& grid, double lambda, double x0)
    : spec_(&spec), grid_(grid), lambda_(lambda), q_(lambda * grid.dt()), x0_(x0) {
  if (spec.state_dim != 1) throw DynamicsError("tree oracle is one-dimensional: state_dim must be 1");
  if (q_ >= 1.0) throw DynamicsError("lambda*dt >= 1: jump branch probability undefined");
  if (spec.U.empty() || spec.V.empty()) throw DynamicsError("empty control set");
  const double dt = grid.dt();
  double bsum = 0.0, smax = 0.0;
  for (double u : spec.U) {
    for (double v : spec.V) {
      bsum += spec.b1(grid.t0, x0, u, v);
      smax = std::max(smax, std::sqrt(spec.sigma_norm2(grid.t0, x0, u, v)));
    }
  }
  b_ref_ = bsum / static_cast<double>(spec.U.size() * spec.V.size());
  sigma_ref_ = smax;
  // Widen σ_ref over the reachable range so the centre weight stays nonnegative.
  for (int pass = 0; pass < 2; ++pass) {
    const double hh = (sigma_ref_ > 1e-14 ? sigma_ref_ : 1.0) * std::sqrt(3.0 * dt);
    for (int qk = 0; qk <= 4; ++qk) {
      const int k = grid.M * qk / 4;
      for (int qj = -4; qj <= 4; ++qj) {
        const double xx = x0 + k * dt * b_ref_ + (k * qj / 4) * hh;
        for (double u : spec.U) {
          for (double v : spec.V) {
            smax = std::max(smax, std::sqrt(spec.sigma_norm2(grid.tau(k), xx, u, v)));
          }
        }
      }
    }
    sigma_ref_ = smax;
  }
  if (sigma_ref_ < 1e-14) sigma_ref_ = 0.0;
  h_ = (sigma_ref_ > 0.0 ? sigma_ref_ : 1.0) * std::sqrt(3.0 * dt);
}

Transition MarkovTree::transition(int k, double x, double u, double v) const {
  Transition tr;
  const double dt = grid_.dt();
  const double t = grid_.tau(k);
  const double b = spec_->b1(t, x, u, v);
  double s2 = 0.0;
  for (int c = 0; c < spec_->brownian_dim; ++c) {
    const double e = spec_->sigma(0, c, t, {&x, 1}, u, v);
    tr.sigma[static_cast<std::size_t>(c)] = e;
    s2 += e * e;
  }
  tr.sigma_norm2 = s2;
  tr.mean = b * dt;
  const double mu = (b - b_ref_) * dt;
  double a = (s2 * dt + mu * mu) / (h_ * h_);
  double c = mu / h_;
  if (a > 1.0 || a < std::fabs(c)) {
    tr.adjusted = true;
    ++adjusted_;
    c = std::clamp(c, -1.0, 1.0);
    a = std::max(std::min(a, 1.0), std::fabs(c));
  }
  tr.p[0] = 0.5 * (a - c);
  tr.p[2] = 0.5 * (a + c);
  tr.p[1] = 1.0 - a;
  for (int m = -1; m <= 1; ++m) tr.dev[static_cast<std::size_t>(m + 1)] = m * h_ - mu;
  return tr;
}

MarkovTree build_tree(const TimeGrid& grid, double lambda, double x0, const GameSpec& spec) {
  return MarkovTree(spec, grid, lambda, x0);
}

ControlPolicy constant_policy(int index) {
  return [index](int, int, std::span<const double>, int) { return index; };
}

StatePath simulate_forward(const GameSpec& spec, const ScenarioBundle& sc, const ControlPolicy& u,
                           const ControlPolicy& v, std::span<const double> x0) {
  const int n = spec.state_dim, d = spec.brownian_dim, M = sc.grid.M;
  if (static_cast<int>(x0.size()) != n) throw DynamicsError("initial state has wrong dimension");
  if (sc.d != d) throw DynamicsError("scenario Brownian dimension does not match spec");
  StatePath path;
  path.grid = sc.grid;
  path.S = sc.S;
  path.n = n;
  path.X.resize(static_cast<std::size_t>(sc.S) * (M + 1) * n);
  path.parity.resize(static_cast<std::size_t>(sc.S) * (M + 1));
  path.u.resize(static_cast<std::size_t>(sc.S) * M);
  path.v.resize(static_cast<std::size_t>(sc.S) * M);
  const double dt = sc.grid.dt();
  std::vector<double> x(x0.begin(), x0.end()), nx(static_cast<std::size_t>(n));
  for (int s = 0; s < sc.S; ++s) {
    std::copy(x0.begin(), x0.end(), x.begin());
    int par = 0;
    auto store = [&](int k) {
      std::copy(x.begin(), x.end(), path.X.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(s) * (M + 1) + k) * n));
      path.parity[static_cast<std::size_t>(s) * (M + 1) + k] = par;
    };
    store(0);
    for (int k = 0; k < M; ++k) {
      const int iu = u(s, k, x, par), iv = v(s, k, x, par);
      const double uu = spec.U.at(static_cast<std::size_t>(iu)), vv = spec.V.at(static_cast<std::size_t>(iv));
      path.u[static_cast<std::size_t>(s) * M + k] = iu;
      path.v[static_cast<std::size_t>(s) * M + k] = iv;
      const double t = sc.grid.tau(k);
      const double* db = sc.dB_at(s, k);
      for (int r = 0; r < n; ++r) {
        double inc = spec.b(r, t, x, uu, vv) * dt;
        for (int c = 0; c < d; ++c) inc += spec.sigma(r, c, t, x, uu, vv) * db[c];
        nx[static_cast<std::size_t>(r)] = x[static_cast<std::size_t>(r)] + inc;
        if (!std::isfinite(nx[static_cast<std::size_t>(r)])) {
          throw DynamicsError("non-finite state at scenario " + std::to_string(s) + ", step " + std::to_string(k + 1));
        }
      }
      x.swap(nx);
      par = (par + sc.dN_at(s, k)) % 2;
      store(k + 1);
    }
  }
  return path;
}

void write_path_csv(std::ostream& os, const StatePath& path, const ScenarioBundle& sc) {
  os << "scenario,k,t,x,regime1,regime2,dB,dN\n";
  for (int s = 0; s < path.S; ++s) {
    for (int k = 0; k <= path.grid.M; ++k) {
      std::vector<double> xs(path.X_at(s, k), path.X_at(s, k) + path.n);
      os << s << ',' << k << ',' << fmt_num(path.grid.tau(k)) << ',' << csv_vector(xs) << ','
         << path.regime(1, s, k) << ',' << path.regime(2, s, k) << ',';
      if (k < path.grid.M) {
        std::vector<double> db(sc.dB_at(s, k), sc.dB_at(s, k) + sc.d);
        os << csv_vector(db) << ',' << sc.dN_at(s, k);
      } else {
        os << ',';
      }
      os << '\n';
    }
  }
}

nlohmann::json MomentReport::to_json() const {
  return {{"lipschitz_ratio", lipschitz_ratio},
          {"exact_zero_deviation", exact_zero_deviation},
          {"growth_ratio", growth_ratio}};
}

MomentReport moment_check(const GameSpec& spec, const ScenarioBundle& sc, const ControlPolicy& u,
                          const ControlPolicy& v, std::span<const double> x0, std::span<const double> x0p) {
  const StatePath a = simulate_forward(spec, sc, u, v, x0);
  const StatePath b = simulate_forward(spec, sc, u, v, x0p);
  const int n = spec.state_dim;
  double dist2 = 0.0, norm2 = 0.0;
  for (int r = 0; r < n; ++r) {
    dist2 += (x0[r] - x0p[r]) * (x0[r] - x0p[r]);
    norm2 += x0[r] * x0[r];
  }
  double dev_sum = 0.0, growth_sum = 0.0;
  for (int s = 0; s < sc.S; ++s) {
    double dev = 0.0, grow = 0.0;
    for (int k = 0; k <= sc.grid.M; ++k) {
      const double* xa = a.X_at(s, k);
      const double* xb = b.X_at(s, k);
      double e = 0.0, g = 0.0;
      for (int r = 0; r < n; ++r) {
        e += (xa[r] - xb[r]) * (xa[r] - xb[r]);
        g += (xa[r] - x0[r]) * (xa[r] - x0[r]);
      }
      dev = std::max(dev, e);
      grow = std::max(grow, g);
    }
    dev_sum += dev;
    growth_sum += grow;
  }
  MomentReport rep;
  if (dist2 == 0.0) {
    rep.exact_zero_deviation = dev_sum == 0.0;
    rep.lipschitz_ratio = 0.0;
  } else {
    rep.lipschitz_ratio = dev_sum / sc.S / dist2;
  }
  rep.growth_ratio = growth_sum / sc.S / ((1.0 + norm2) * (sc.grid.T - sc.grid.t0));
  return rep;
}

nlohmann::json MomentRefinement::to_json() const {
  nlohmann::json a = nlohmann::json::array();
  for (std::size_t i = 0; i < M.size(); ++i) {
    auto j = reports[i].to_json();
    j["M"] = M[i];
    a.push_back(j);
  }
  return {{"check", "moments"}, {"values_by_grid", a}, {"verdict", diverging ? "FAIL" : "PASS"}};
}

MomentRefinement moment_refinement(const GameSpec& spec, double t0, const std::vector<int>& Ms, int S,
                                   std::uint64_t seed, const ControlPolicy& u, const ControlPolicy& v,
                                   std::span<const double> x0, std::span<const double> x0p) {
  MomentRefinement out;
  for (int M : Ms) {
    const TimeGrid grid(t0, spec.T, M);
    const auto sc = sample_scenarios(grid, spec.lambda, S, seed, spec.brownian_dim);
    out.M.push_back(M);
    out.reports.push_back(moment_check(spec, sc, u, v, x0, x0p));
  }
  for (std::size_t i = 1; i < out.reports.size(); ++i) {
    const auto& p = out.reports[i - 1];
    const auto& c = out.reports[i];
    if (c.lipschitz_ratio > 2.0 * p.lipschitz_ratio + 1e-12 || c.growth_ratio > 2.0 * p.growth_ratio + 1e-12) {
      out.diverging = true;
    }
  }
  return out;
}

}  // namespace nsdg
