#include "nsdg/isaacs_pde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "nsdg/io.hpp"

namespace nsdg {

double hamiltonian(const GameSpec& spec, int i, const HamiltonianInputs& in) {
  const int n = spec.state_dim, d = spec.brownian_dim;
  const std::span<const double> x(in.x.data(), static_cast<std::size_t>(n));
  std::array<double, 9> sig{};
  for (int a = 0; a < n; ++a)
    for (int c = 0; c < d; ++c) sig[static_cast<std::size_t>(a * d + c)] = spec.sigma(a, c, in.t, x, in.u, in.v);
  double second = 0.0;
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      double ss = 0.0;
      for (int c = 0; c < d; ++c) ss += sig[static_cast<std::size_t>(a * d + c)] * sig[static_cast<std::size_t>(b * d + c)];
      second += ss * in.A[static_cast<std::size_t>(a * n + b)];
    }
  }
  double drift = 0.0;
  for (int a = 0; a < n; ++a) drift += in.p[static_cast<std::size_t>(a)] * spec.b(a, in.t, x, in.u, in.v);
  std::array<double, 3> z{};
  for (int c = 0; c < d; ++c)
    for (int a = 0; a < n; ++a) z[static_cast<std::size_t>(c)] += in.p[static_cast<std::size_t>(a)] * sig[static_cast<std::size_t>(a * d + c)];
  return 0.5 * second + drift +
         spec.f(i, in.t, x, in.y1, in.y2, {z.data(), static_cast<std::size_t>(d)}, in.u, in.v);
}

const char* order_name(MinimaxOrder o) {
  switch (o) {
    case MinimaxOrder::sup_u_inf_v:
      return "sup_u inf_v";
    case MinimaxOrder::inf_v_sup_u:
      return "inf_v sup_u";
    case MinimaxOrder::sup_v_inf_u:
      return "sup_v inf_u";
    default:
      return "inf_u sup_v";
  }
}

MinimaxResult minimax(const std::vector<double>& h, int nu, int nv, MinimaxOrder order) {
  auto H = [&](int iu, int iv) { return h[static_cast<std::size_t>(iu * nv + iv)]; };
  MinimaxResult best;
  // Outer loop over the first-named player, inner optimum over the other.
  const bool outer_u = order == MinimaxOrder::sup_u_inf_v || order == MinimaxOrder::inf_u_sup_v;
  const bool outer_max = order == MinimaxOrder::sup_u_inf_v || order == MinimaxOrder::sup_v_inf_u;
  const int no = outer_u ? nu : nv, ni = outer_u ? nv : nu;
  bool have = false;
  for (int a = 0; a < no; ++a) {
    int arg = 0;
    double inner = outer_u ? H(a, 0) : H(0, a);
    for (int b = 1; b < ni; ++b) {
      const double val = outer_u ? H(a, b) : H(b, a);
      if (outer_max ? val < inner : val > inner) {
        inner = val;
        arg = b;
      }
    }
    if (!have || (outer_max ? inner > best.value : inner < best.value)) {
      have = true;
      best.value = inner;
      best.iu = outer_u ? a : arg;
      best.iv = outer_u ? arg : a;
    }
  }
  return best;
}

MinimaxResult minimax_hamiltonian(const GameSpec& spec, int i, HamiltonianInputs in, MinimaxOrder order) {
  const int nu = static_cast<int>(spec.U.size()), nv = static_cast<int>(spec.V.size());
  std::vector<double> h(static_cast<std::size_t>(nu * nv));
  for (int a = 0; a < nu; ++a) {
    for (int b = 0; b < nv; ++b) {
      in.u = spec.U[static_cast<std::size_t>(a)];
      in.v = spec.V[static_cast<std::size_t>(b)];
      h[static_cast<std::size_t>(a * nv + b)] = hamiltonian(spec, i, in);
    }
  }
  return minimax(h, nu, nv, order);
}

std::vector<HamiltonianInputs> default_gap_samples(const GameSpec& spec, const GapSampleRanges& r) {
  std::vector<HamiltonianInputs> out;
  const int n = spec.state_dim;
  const double tri[3] = {-1.0, 0.0, 1.0};
  for (int it = 0; it < 5; ++it) {
    for (int ix = 0; ix < 5; ++ix) {
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
          for (int c = 0; c < 3; ++c) {
            for (int e = 0; e < 3; ++e) {
              HamiltonianInputs in;
              in.t = spec.T * it / 4.0;
              for (int q = 0; q < n; ++q) in.x[static_cast<std::size_t>(q)] = r.x_min + (r.x_max - r.x_min) * ix / 4.0;
              in.y1 = r.y_abs * tri[a];
              in.y2 = r.y_abs * tri[b];
              for (int q = 0; q < n; ++q) {
                in.p[static_cast<std::size_t>(q)] = r.p_abs * tri[c];
                in.A[static_cast<std::size_t>(q * n + q)] = r.A_abs * tri[e];
              }
              out.push_back(in);
            }
          }
        }
      }
    }
  }
  return out;
}

nlohmann::json IsaacsGapReport::to_json() const {
  return {{"check", "isaacs_gap"},
          {"gap_lower", gap_lower},
          {"gap_upper", gap_upper},
          {"samples", samples},
          {"isaacs", isaacs()},
          {"verdict", verdict_str(isaacs())}};
}

IsaacsGapReport isaacs_gap(const GameSpec& spec, const std::vector<HamiltonianInputs>& samples) {
  IsaacsGapReport rep;
  rep.samples = samples.size();
  const int nu = static_cast<int>(spec.U.size()), nv = static_cast<int>(spec.V.size());
  std::vector<double> h(static_cast<std::size_t>(nu * nv));
  for (const auto& base : samples) {
    for (int i = 1; i <= 2; ++i) {
      HamiltonianInputs in = base;
      for (int a = 0; a < nu; ++a) {
        for (int b = 0; b < nv; ++b) {
          in.u = spec.U[static_cast<std::size_t>(a)];
          in.v = spec.V[static_cast<std::size_t>(b)];
          h[static_cast<std::size_t>(a * nv + b)] = hamiltonian(spec, i, in);
        }
      }
      const double lo = minimax(h, nu, nv, MinimaxOrder::sup_u_inf_v).value;
      const double hi = minimax(h, nu, nv, MinimaxOrder::inf_v_sup_u).value;
      const double lo2 = minimax(h, nu, nv, MinimaxOrder::sup_v_inf_u).value;
      const double hi2 = minimax(h, nu, nv, MinimaxOrder::inf_u_sup_v).value;
      rep.gap_lower = std::max(rep.gap_lower, std::fabs(hi - lo));
      rep.gap_upper = std::max(rep.gap_upper, std::fabs(hi2 - lo2));
    }
  }
  return rep;
}

IsaacsGapReport isaacs_gap(const GameSpec& spec) { return isaacs_gap(spec, default_gap_samples(spec)); }

SpaceGrid::SpaceGrid(double lo, double hi, int J_) : x_min(lo), x_max(hi), J(J_) {
  if (!(lo < hi)) throw PdeError("space grid needs x_min < x_max");
  if (J < 3) throw PdeError("space grid needs J >= 3");
}

MinimaxOrder Orientation::order() const {
  if (!upper) return favor == 1 ? MinimaxOrder::sup_u_inf_v : MinimaxOrder::sup_v_inf_u;
  return favor == 1 ? MinimaxOrder::inf_v_sup_u : MinimaxOrder::inf_u_sup_v;
}

std::array<std::string, 2> Orientation::labels() const {
  const std::string s = upper ? "U" : "W";
  if (favor == 1) return {s + "1", s + "2p"};
  return {s + "1p", s + "2"};
}

std::string Orientation::name() const { return std::string(upper ? "upper" : "lower") + (favor == 1 ? "-p1" : "-p2"); }

double ValueField::interp(int c, int k, double x) const {
  if (!inside(x)) throw PdeError("interpolation outside the spatial domain");
  double pos = (x - space.x_min) / space.dx();
  int j = static_cast<int>(std::floor(pos));
  j = std::clamp(j, 0, space.J);
  const double w = pos - j;
  return (1.0 - w) * at(c, k, j) + w * at(c, k, j + 1);
}

namespace {

struct CoefficientMax {
  double sigma2 = 0.0;
  double b = 0.0;
};

CoefficientMax coefficient_max(const GameSpec& spec, const SpaceGrid& grid, double t0) {
  CoefficientMax m;
  for (int it = 0; it <= 4; ++it) {
    const double t = t0 + (spec.T - t0) * it / 4.0;
    for (int j = 0; j < grid.nodes(); ++j) {
      const double x = grid.x(j);
      for (double u : spec.U) {
        for (double v : spec.V) {
          m.sigma2 = std::max(m.sigma2, spec.sigma_norm2(t, x, u, v));
          m.b = std::max(m.b, std::fabs(spec.b1(t, x, u, v)));
        }
      }
    }
  }
  return m;
}

}  // namespace

double cfl_dt(const GameSpec& spec, const SpaceGrid& grid, double t0) {
  const CoefficientMax m = coefficient_max(spec, grid, t0);
  const double dx = grid.dx();
  return dx * dx / (m.sigma2 + dx * m.b + dx * dx * (spec.lipschitz_bound + spec.lambda));
}

int cfl_min_steps(const GameSpec& spec, const SpaceGrid& grid, double t0) {
  const double dt_max = cfl_dt(spec, grid, t0);
  int M = std::max(1, static_cast<int>(std::ceil((spec.T - t0) / dt_max * (1.0 - 1e-12))));
  while (TimeGrid(t0, spec.T, M).dt() > dt_max) ++M;
  return M;
}

void isaacs_step(const GameSpec& spec, const SpaceGrid& grid, const TimeGrid& time, MinimaxOrder order, int k,
                 const std::vector<double>& w1, const std::vector<double>& w2, std::vector<double>& out1,
                 std::vector<double>& out2) {
  const int N = grid.nodes(), last = N - 1;
  const double dx = grid.dx(), dt = time.dt();
  const double t = time.tau(k + 1);
  const int nu = static_cast<int>(spec.U.size()), nv = static_cast<int>(spec.V.size());
  std::vector<double> h1(static_cast<std::size_t>(nu * nv)), h2(h1.size());
  out1.resize(static_cast<std::size_t>(N));
  out2.resize(static_cast<std::size_t>(N));
  const std::vector<double>* w[2] = {&w1, &w2};
  for (int j = 0; j < N; ++j) {
    const double x = grid.x(j);
    // Per component: second difference and one-sided differences with
    // linear ghost values at the boundary.
    double d2[2], dp[2], dm[2], d0[2];
    for (int c = 0; c < 2; ++c) {
      const auto& a = *w[c];
      if (j == 0) {
        d2[c] = 0.0;
        dp[c] = dm[c] = d0[c] = (a[1] - a[0]) / dx;
      } else if (j == last) {
        d2[c] = 0.0;
        dp[c] = dm[c] = d0[c] = (a[static_cast<std::size_t>(last)] - a[static_cast<std::size_t>(last - 1)]) / dx;
      } else {
        const double l = a[static_cast<std::size_t>(j - 1)], m = a[static_cast<std::size_t>(j)],
                     r = a[static_cast<std::size_t>(j + 1)];
        d2[c] = (r - 2.0 * m + l) / (dx * dx);
        dp[c] = (r - m) / dx;
        dm[c] = (m - l) / dx;
        d0[c] = (r - l) / (2.0 * dx);
      }
    }
    const double y1 = w1[static_cast<std::size_t>(j)], y2 = w2[static_cast<std::size_t>(j)];
    for (int a = 0; a < nu; ++a) {
      for (int b = 0; b < nv; ++b) {
        const double u = spec.U[static_cast<std::size_t>(a)], v = spec.V[static_cast<std::size_t>(b)];
        const double bb = spec.b1(t, x, u, v);
        const double s2 = spec.sigma_norm2(t, x, u, v);
        std::array<double, 3> z{};
        for (int c = 0; c < 2; ++c) {
          for (int q = 0; q < spec.brownian_dim; ++q) z[static_cast<std::size_t>(q)] = d0[c] * spec.sigma(0, q, t, {&x, 1}, u, v);
          const double val = 0.5 * s2 * d2[c] + std::max(bb, 0.0) * dp[c] + std::min(bb, 0.0) * dm[c] +
                             spec.f(c + 1, t, {&x, 1}, y1, y2, {z.data(), static_cast<std::size_t>(spec.brownian_dim)}, u, v);
          (c == 0 ? h1 : h2)[static_cast<std::size_t>(a * nv + b)] = val;
        }
      }
    }
    out1[static_cast<std::size_t>(j)] = y1 + dt * minimax(h1, nu, nv, order).value;
    out2[static_cast<std::size_t>(j)] = y2 + dt * minimax(h2, nu, nv, order).value;
    if (!std::isfinite(out1[static_cast<std::size_t>(j)]) || !std::isfinite(out2[static_cast<std::size_t>(j)])) {
      throw PdeError("non-finite value at (k, j) = (" + std::to_string(k) + ", " + std::to_string(j) + ")");
    }
  }
}

ValueField solve_coupled_isaacs(const GameSpec& spec, const SpaceGrid& grid, const TimeGrid& time,
                                const Orientation& o) {
  if (spec.state_dim != 1) throw PdeError("the finite-difference solver is one-dimensional");
  const double dt_max = cfl_dt(spec, grid, time.t0);
  if (time.dt() > dt_max) {
    const int need = cfl_min_steps(spec, grid, time.t0);
    std::ostringstream os;
    os << "CFL violated: dt = " << time.dt() << " > " << dt_max << "; use M >= " << need;
    throw PdeError(os.str(), need);
  }
  ValueField f;
  f.orientation = o;
  f.space = grid;
  f.time = time;
  const int N = grid.nodes(), M = time.M;
  for (auto& w : f.W) w.assign(static_cast<std::size_t>(M + 1) * N, 0.0);
  std::vector<double> a(static_cast<std::size_t>(N)), b(a.size()), na, nb;
  for (int j = 0; j < N; ++j) {
    const double x = grid.x(j);
    a[static_cast<std::size_t>(j)] = spec.terminal(1, {&x, 1});
    b[static_cast<std::size_t>(j)] = spec.terminal(2, {&x, 1});
  }
  const MinimaxOrder order = o.order();
  auto store = [&](int k) {
    std::copy(a.begin(), a.end(), f.W[0].begin() + static_cast<std::ptrdiff_t>(k) * N);
    std::copy(b.begin(), b.end(), f.W[1].begin() + static_cast<std::ptrdiff_t>(k) * N);
  };
  store(M);
  for (int k = M - 1; k >= 0; --k) {
    isaacs_step(spec, grid, time, order, k, a, b, na, nb);
    a.swap(na);
    b.swap(nb);
    store(k);
  }
  return f;
}

nlohmann::json refinement_json(const std::string& check, const std::string& statistic,
                               const std::vector<RefinementLevel>& levels, const std::string& verdict,
                               const nlohmann::json& extra) {
  nlohmann::json vals = nlohmann::json::array();
  for (const auto& l : levels) {
    nlohmann::json e = {{"J", l.J}, {"M", l.M}, {"dx", l.dx}, {"dt", l.dt}};
    for (const auto& [k, v] : l.values) e[k] = v;
    vals.push_back(e);
  }
  nlohmann::json j = {{"check", check}, {"statistic", statistic}, {"values_by_grid", vals}, {"verdict", verdict}};
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  return j;
}

nlohmann::json CoincidenceReport::to_json() const {
  return refinement_json("coincidence", "max_interior_abs_upper_minus_lower", levels, verdict,
                         {{"isaacs_gap", gap.to_json()}, {"min_upper_minus_lower", min_upper_minus_lower}, {"note", note}});
}

namespace {

// Sup-norm difference and minimum signed difference over interior nodes.
std::pair<double, double> field_difference(const ValueField& up, const ValueField& lo, int exclude) {
  double mx = 0.0, mn = std::numeric_limits<double>::infinity();
  const int N = up.space.nodes();
  for (int c = 0; c < 2; ++c) {
    for (int k = 0; k <= up.time.M; ++k) {
      for (int j = exclude; j < N - exclude; ++j) {
        const double d = up.at(c, k, j) - lo.at(c, k, j);
        mx = std::max(mx, std::fabs(d));
        mn = std::min(mn, d);
      }
    }
  }
  return {mx, mn};
}

// PASS when every level is exact or each refinement shrinks by >= `ratio`.
bool shrinks(const std::vector<double>& v, double ratio, double floor) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] <= floor) continue;
    if (v[i - 1] <= floor) return false;
    if (v[i - 1] / v[i] < ratio) return false;
  }
  return true;
}

}  // namespace

CoincidenceReport coincidence_check(const GameSpec& spec, double t0, const std::vector<SpaceGrid>& grids,
                                    const std::vector<int>& Ms) {
  CoincidenceReport rep;
  rep.gap = isaacs_gap(spec);
  rep.min_upper_minus_lower = std::numeric_limits<double>::infinity();
  std::vector<double> d1, d2;
  for (std::size_t l = 0; l < grids.size(); ++l) {
    const TimeGrid time(t0, spec.T, Ms[l]);
    RefinementLevel lev;
    lev.J = grids[l].J;
    lev.M = Ms[l];
    lev.dx = grids[l].dx();
    lev.dt = time.dt();
    double diffs[2];
    for (int favor = 1; favor <= 2; ++favor) {
      const ValueField lo = solve_coupled_isaacs(spec, grids[l], time, {false, favor});
      const ValueField up = solve_coupled_isaacs(spec, grids[l], time, {true, favor});
      const auto [mx, mn] = field_difference(up, lo, kBoundaryExclusion);
      diffs[favor - 1] = mx;
      rep.min_upper_minus_lower = std::min(rep.min_upper_minus_lower, mn);
    }
    d1.push_back(diffs[0]);
    d2.push_back(diffs[1]);
    lev.values = {{"p1", diffs[0]},
                  {"p2", diffs[1]},
                  {"fitted_c_p1", diffs[0] / (lev.dx + lev.dt)},
                  {"fitted_c_p2", diffs[1] / (lev.dx + lev.dt)}};
    rep.levels.push_back(lev);
  }
  if (!rep.gap.isaacs()) {
    rep.verdict = "INCONCLUSIVE";
    rep.note = "Isaacs condition fails on the sample grid; only the one-sided ordering is reported";
    return rep;
  }
  const bool ok = shrinks(d1, 1.5, 1e-12) && shrinks(d2, 1.5, 1e-12);
  rep.verdict = ok ? "PASS" : "FAIL";
  return rep;
}

RegularityStats field_regularity(const ValueField& f, int exclude) {
  RegularityStats st;
  const int N = f.space.nodes(), M = f.time.M;
  const double dx = f.space.dx();
  for (int c = 0; c < 2; ++c) {
    for (int k = 0; k <= M; ++k) {
      for (int j = exclude; j < N - exclude; ++j) {
        const double x = f.space.x(j);
        st.growth = std::max(st.growth, std::fabs(f.at(c, k, j)) / (1.0 + std::fabs(x)));
        if (j + 1 < N - exclude) st.spatial_quotient = std::max(st.spatial_quotient, std::fabs(f.at(c, k, j + 1) - f.at(c, k, j)) / dx);
      }
    }
    for (int k = 0; k <= M; ++k) {
      for (int k2 = k + 1; k2 <= M; ++k2) {
        const double rt = 1.0 / std::sqrt(f.time.tau(k2) - f.time.tau(k));
        for (int j = exclude; j < N - exclude; ++j) {
          const double r = std::fabs(f.at(c, k2, j) - f.at(c, k, j)) * rt / (1.0 + std::fabs(f.space.x(j)));
          st.holder_ratio = std::max(st.holder_ratio, r);
        }
      }
    }
  }
  return st;
}

nlohmann::json RegularityReport::to_json() const {
  return refinement_json("regularity", "spatial_quotient, holder_ratio, growth", levels, verdict,
                         {{"stable_within_20pct", stable}, {"diverging", diverging}});
}

RegularityReport field_regularity_check(const GameSpec& spec, double t0, const SpaceGrid& grid,
                                        const std::vector<int>& Ms, const Orientation& o) {
  RegularityReport rep;
  std::vector<RegularityStats> st;
  for (int M : Ms) {
    const TimeGrid time(t0, spec.T, M);
    const ValueField f = solve_coupled_isaacs(spec, grid, time, o);
    st.push_back(field_regularity(f, kBoundaryExclusion));
    RefinementLevel lev;
    lev.J = grid.J;
    lev.M = M;
    lev.dx = grid.dx();
    lev.dt = time.dt();
    lev.values = {{"spatial_quotient", st.back().spatial_quotient},
                  {"holder_ratio", st.back().holder_ratio},
                  {"growth", st.back().growth}};
    rep.levels.push_back(lev);
  }
  auto close = [](double a, double b) {
    if (a <= 1e-12 && b <= 1e-12) return true;
    return std::fabs(a - b) <= 0.2 * std::max(a, b);
  };
  for (std::size_t i = 1; i < st.size(); ++i) {
    const auto& a = st[i - 1];
    const auto& b = st[i];
    if (!close(a.spatial_quotient, b.spatial_quotient) || !close(a.holder_ratio, b.holder_ratio) ||
        !close(a.growth, b.growth)) {
      rep.stable = false;
    }
    if (b.spatial_quotient > 2.0 * a.spatial_quotient + 1e-12 || b.holder_ratio > 2.0 * a.holder_ratio + 1e-12 ||
        b.growth > 2.0 * a.growth + 1e-12) {
      rep.diverging = true;
    }
  }
  rep.verdict = rep.stable && !rep.diverging ? "PASS" : "FAIL";
  return rep;
}

void write_fields_csv(std::ostream& os, const std::vector<const ValueField*>& fields) {
  if (fields.empty()) return;
  static const char* kOrder[] = {"W1", "W2", "W1p", "W2p", "U1", "U2", "U1p", "U2p"};
  std::map<std::string, std::pair<const ValueField*, int>> cols;
  for (const ValueField* f : fields) {
    const auto labels = f->orientation.labels();
    for (int c = 0; c < 2; ++c) cols[labels[static_cast<std::size_t>(c)]] = {f, c};
  }
  const ValueField& ref = *fields.front();
  os << "k,t,j,x";
  for (const char* name : kOrder)
    if (cols.count(name)) os << ',' << name;
  os << '\n';
  for (int k = 0; k <= ref.time.M; ++k) {
    for (int j = 0; j < ref.space.nodes(); ++j) {
      os << k << ',' << fmt_num(ref.time.tau(k)) << ',' << j << ',' << fmt_num(ref.space.x(j));
      for (const char* name : kOrder) {
        auto it = cols.find(name);
        if (it != cols.end()) os << ',' << fmt_num(it->second.first->at(it->second.second, k, j));
      }
      os << '\n';
    }
  }
}

}  // namespace nsdg
