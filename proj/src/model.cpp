#include "nsdg/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace nsdg {

namespace {

Coefficient coefficient_at(const nlohmann::json& j, const std::string& where) {
  try {
    return Coefficient::from_json(j);
  } catch (const std::exception& e) {
    throw SpecError(where + ": " + e.what());
  }
}

std::vector<Coefficient> coefficient_list(const nlohmann::json& j, std::size_t expected,
                                          const std::string& where) {
  std::vector<Coefficient> out;
  if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) {
      const auto& e = j[i];
      if (e.is_array()) {
        for (std::size_t c = 0; c < e.size(); ++c) {
          out.push_back(coefficient_at(e[c], where + "[" + std::to_string(i) + "][" + std::to_string(c) + "]"));
        }
      } else {
        out.push_back(coefficient_at(e, where + "[" + std::to_string(i) + "]"));
      }
    }
  } else {
    out.push_back(coefficient_at(j, where));
  }
  if (out.size() != expected) {
    throw SpecError(where + ": expected " + std::to_string(expected) + " entries, got " +
                    std::to_string(out.size()));
  }
  return out;
}

const nlohmann::json& require(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw SpecError(std::string("missing field '") + key + "'");
  return j.at(key);
}

double number(const nlohmann::json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_number()) throw SpecError(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

std::vector<double> control_points(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw SpecError(std::string("controls: missing '") + key + "'");
  const auto& a = j.at(key);
  if (!a.is_array()) throw SpecError(std::string("controls.") + key + " must be a list");
  std::vector<double> out;
  for (const auto& e : a) {
    if (!e.is_number()) throw SpecError(std::string("controls.") + key + " entries must be numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

}  // namespace

double GameSpec::b(int row, double t, std::span<const double> x, double u, double v) const {
  CoeffArgs a;
  a.t = t;
  a.x = x;
  a.u = u;
  a.v = v;
  return drift[static_cast<std::size_t>(row)](a);
}

double GameSpec::sigma(int row, int col, double t, std::span<const double> x, double u, double v) const {
  CoeffArgs a;
  a.t = t;
  a.x = x;
  a.u = u;
  a.v = v;
  return diffusion[static_cast<std::size_t>(row * brownian_dim + col)](a);
}

double GameSpec::f(int comp, double t, std::span<const double> x, double y1, double y2,
                   std::span<const double> z, double u, double v) const {
  CoeffArgs a;
  a.t = t;
  a.x = x;
  a.y1 = y1;
  a.y2 = y2;
  a.z = z;
  a.u = u;
  a.v = v;
  return ftilde[static_cast<std::size_t>(comp - 1)](a);
}

double GameSpec::terminal(int comp, std::span<const double> x) const {
  CoeffArgs a;
  a.t = T;
  a.x = x;
  return Phi[static_cast<std::size_t>(comp - 1)](a);
}

double GameSpec::sigma_norm2(double t, double x, double u, double v) const {
  double s = 0.0;
  for (int c = 0; c < brownian_dim; ++c) {
    double e = sigma(0, c, t, {&x, 1}, u, v);
    s += e * e;
  }
  return s;
}

bool GameSpec::dynamics_control_free() const {
  for (const auto& c : drift)
    if (c.uses_controls()) return false;
  for (const auto& c : diffusion)
    if (c.uses_controls()) return false;
  return true;
}

bool GameSpec::control_free() const {
  return dynamics_control_free() && !ftilde[0].uses_controls() && !ftilde[1].uses_controls();
}

GameSpec spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SpecError("game spec must be a JSON object");
  GameSpec s;
  s.name = j.value("name", std::string("unnamed"));
  s.state_dim = static_cast<int>(number(j, "state_dim"));
  s.brownian_dim = static_cast<int>(number(j, "brownian_dim"));
  if (s.state_dim < 1 || s.state_dim > 3) throw SpecError("state_dim must be in 1..3");
  if (s.brownian_dim < 1 || s.brownian_dim > 3) throw SpecError("brownian_dim must be in 1..3");
  s.T = number(j, "T");
  if (!(s.T > 0.0)) throw SpecError("T must be positive");
  s.lambda = number(j, "lambda");
  if (s.lambda < 0.0) throw SpecError("lambda must be nonnegative");
  s.K = number(j, "K");
  s.lipschitz_bound = number(j, "lipschitz_bound");
  if (j.contains("coefficient_bound") && !j.at("coefficient_bound").is_null()) {
    s.coefficient_bound = number(j, "coefficient_bound");
  }
  const auto& controls = require(j, "controls");
  s.U = control_points(controls, "U");
  s.V = control_points(controls, "V");
  const auto n = static_cast<std::size_t>(s.state_dim);
  const auto d = static_cast<std::size_t>(s.brownian_dim);
  s.drift = coefficient_list(require(j, "drift"), n, "drift");
  s.diffusion = coefficient_list(require(j, "diffusion"), n * d, "diffusion");
  s.ftilde[0] = coefficient_at(require(j, "ftilde_1"), "ftilde_1");
  s.ftilde[1] = coefficient_at(require(j, "ftilde_2"), "ftilde_2");
  s.Phi[0] = coefficient_at(require(j, "Phi_1"), "Phi_1");
  s.Phi[1] = coefficient_at(require(j, "Phi_2"), "Phi_2");
  return s;
}

nlohmann::json spec_to_json(const GameSpec& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["state_dim"] = s.state_dim;
  j["brownian_dim"] = s.brownian_dim;
  j["T"] = s.T;
  j["lambda"] = s.lambda;
  j["K"] = s.K;
  j["lipschitz_bound"] = s.lipschitz_bound;
  if (s.coefficient_bound) j["coefficient_bound"] = *s.coefficient_bound;
  j["controls"] = {{"U", s.U}, {"V", s.V}};
  auto list = [](const std::vector<Coefficient>& cs) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& c : cs) a.push_back(c.to_json());
    return a;
  };
  j["drift"] = list(s.drift);
  j["diffusion"] = list(s.diffusion);
  j["ftilde_1"] = s.ftilde[0].to_json();
  j["ftilde_2"] = s.ftilde[1].to_json();
  j["Phi_1"] = s.Phi[0].to_json();
  j["Phi_2"] = s.Phi[1].to_json();
  return j;
}

GameSpec load_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open spec file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw SpecError(path + ": " + e.what());
  }
  return spec_from_json(j);
}

int m_parity(long long j) { return (j % 2 != 0) ? 1 : 2; }

int regime_at(int i, long long jump_count) { return m_parity(static_cast<long long>(i) + jump_count); }

std::string FieldLabel::str() const { return std::to_string(index) + (primed ? "'" : ""); }

FieldLabel n_map(int j, int l) {
  if (l == j) return {j, false};
  return {l, true};
}

DecoupledDriver::DecoupledDriver(const GameSpec& spec, int i) : spec_(&spec), i_(i) {
  if (i != 1 && i != 2) throw SpecError("regime index must be 1 or 2");
}

double DecoupledDriver::operator()(double t, std::span<const double> x, double y, double h,
                                   std::span<const double> z, double u, double v) const {
  if (i_ == 1) return spec_->f(1, t, x, y, y + h, z, u, v);
  return spec_->f(2, t, x, y + h, y, z, u, v);
}

double DecoupledDriver::lipschitz() const { return 2.0 * spec_->lipschitz_bound; }

double halton(std::size_t index, int dim) {
  static constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
  const int base = kPrimes[dim % 16];
  double f = 1.0, r = 0.0;
  std::size_t i = index + 1;
  while (i > 0) {
    f /= base;
    r += f * static_cast<double>(i % static_cast<std::size_t>(base));
    i /= static_cast<std::size_t>(base);
  }
  return r;
}

bool ValidationReport::pass() const {
  for (const auto& f : findings)
    if (!f.pass) return false;
  return true;
}

nlohmann::json ValidationReport::to_json() const {
  auto list = [](const std::vector<Finding>& fs) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& f : fs) {
      a.push_back({{"name", f.name}, {"pass", f.pass}, {"statistic", f.statistic}, {"detail", f.detail}});
    }
    return a;
  };
  return {{"findings", list(findings)}, {"advisories", list(advisories)}, {"verdict", pass() ? "PASS" : "FAIL"}};
}

namespace {

// One probe point: scalar slots plus vector parts.
struct ProbePoint {
  double t, y1, y2, u, v;
  std::array<double, 3> x{}, z{};
  CoeffArgs args(int n, int d) const {
    CoeffArgs a;
    a.t = t;
    a.x = {x.data(), static_cast<std::size_t>(n)};
    a.y1 = y1;
    a.y2 = y2;
    a.z = {z.data(), static_cast<std::size_t>(d)};
    a.u = u;
    a.v = v;
    return a;
  }
};

ProbePoint probe_point(const GameSpec& s, const ProbeBox& box, std::size_t i) {
  ProbePoint p{};
  int dim = 0;
  auto next = [&] { return halton(i, dim++); };
  p.t = s.T * next();
  for (int k = 0; k < s.state_dim; ++k) p.x[static_cast<std::size_t>(k)] = box.x_min + (box.x_max - box.x_min) * next();
  p.y1 = box.y_abs * (2.0 * next() - 1.0);
  p.y2 = box.y_abs * (2.0 * next() - 1.0);
  for (int k = 0; k < s.brownian_dim; ++k) p.z[static_cast<std::size_t>(k)] = box.z_abs * (2.0 * next() - 1.0);
  auto pick = [](const std::vector<double>& set, double w) {
    if (set.empty()) return 0.0;
    auto idx = static_cast<std::size_t>(w * static_cast<double>(set.size()));
    return set[std::min(idx, set.size() - 1)];
  };
  p.u = pick(s.U, next());
  p.v = pick(s.V, next());
  return p;
}

struct NamedCoefficient {
  std::string name;
  const Coefficient* c;
};

std::vector<NamedCoefficient> all_coefficients(const GameSpec& s) {
  std::vector<NamedCoefficient> out;
  for (std::size_t i = 0; i < s.drift.size(); ++i) out.push_back({"drift[" + std::to_string(i) + "]", &s.drift[i]});
  for (std::size_t i = 0; i < s.diffusion.size(); ++i)
    out.push_back({"diffusion[" + std::to_string(i) + "]", &s.diffusion[i]});
  out.push_back({"ftilde_1", &s.ftilde[0]});
  out.push_back({"ftilde_2", &s.ftilde[1]});
  out.push_back({"Phi_1", &s.Phi[0]});
  out.push_back({"Phi_2", &s.Phi[1]});
  return out;
}

}  // namespace

ValidationReport validate_spec(const GameSpec& s, const ProbeBox& box) {
  ValidationReport rep;
  {
    Finding f{"intensity condition K - lambda > -1", s.K - s.lambda > -1.0, "", s.K - s.lambda};
    std::ostringstream os;
    os << "K - lambda = " << s.K - s.lambda;
    f.detail = os.str();
    rep.findings.push_back(f);
  }
  {
    Finding f{"finite nonempty control sets", !s.U.empty() && !s.V.empty(), "", 0.0};
    f.detail = "|U| = " + std::to_string(s.U.size()) + ", |V| = " + std::to_string(s.V.size());
    f.statistic = static_cast<double>(std::min(s.U.size(), s.V.size()));
    rep.findings.push_back(f);
  }
  if (s.U.empty() || s.V.empty()) {
    rep.findings.push_back({"Lipschitz probe", false, "skipped: empty control set", 0.0});
    return rep;
  }

  const auto coeffs = all_coefficients(s);
  const int n = s.state_dim, d = s.brownian_dim;
  const double hx = 1e-5 * (box.x_max - box.x_min);
  const double hy = 1e-5 * box.y_abs, hz = 1e-5 * box.z_abs;
  double worst = 0.0;
  std::string worst_name = "none";
  bool total = true;
  std::string total_detail = "all evaluations finite and unguarded";
  const auto N = static_cast<std::size_t>(box.samples);
  for (std::size_t i = 0; i < N; ++i) {
    const ProbePoint p = probe_point(s, box, i);
    // Cycle the perturbed argument block through x, y1, y2, z.
    const int block = static_cast<int>(i % 4);
    ProbePoint q = p;
    double h = 0.0;
    if (block == 0) {
      q.x[i / 4 % static_cast<std::size_t>(n)] += hx;
      h = hx;
    } else if (block == 1) {
      q.y1 += hy;
      h = hy;
    } else if (block == 2) {
      q.y2 += hy;
      h = hy;
    } else {
      q.z[i / 4 % static_cast<std::size_t>(d)] += hz;
      h = hz;
    }
    for (const auto& nc : coeffs) {
      bool guarded = false;
      double a = nc.c->eval(p.args(n, d), &guarded);
      double b = nc.c->eval(q.args(n, d), &guarded);
      if (!std::isfinite(a) || !std::isfinite(b) || guarded) {
        if (total) {
          total = false;
          total_detail = nc.name + (guarded ? ": division denominator below 1e-12" : ": non-finite value") +
                         " at probe " + std::to_string(i);
        }
        continue;
      }
      double ratio = std::fabs(b - a) / h;
      if (ratio > worst) {
        worst = ratio;
        worst_name = nc.name;
      }
    }
  }
  rep.findings.push_back({"evaluation totality", total, total_detail, total ? 0.0 : 1.0});
  {
    bool ok = worst <= s.lipschitz_bound * (1.0 + 1e-6) + 1e-9;
    std::ostringstream os;
    os << "max sampled ratio " << worst << " (" << worst_name << ") vs C = " << s.lipschitz_bound << " over "
       << N << " probes";
    rep.findings.push_back({"Lipschitz probe", ok, os.str(), worst});
  }
  {
    // f~_1 - K y2 nondecreasing in y2, f~_2 - K y1 nondecreasing in y1.
    double worst_slack = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      ProbePoint p = probe_point(s, box, i);
      double gap = box.y_abs * halton(i, 12) + 1e-3;
      ProbePoint q = p;
      q.y2 -= gap;
      double s1 = (s.ftilde[0](p.args(n, d)) - s.ftilde[0](q.args(n, d))) - s.K * gap;
      q = p;
      q.y1 -= gap;
      double s2 = (s.ftilde[1](p.args(n, d)) - s.ftilde[1](q.args(n, d))) - s.K * gap;
      worst_slack = std::min({worst_slack, s1, s2});
    }
    std::ostringstream os;
    os << "min sampled slack of f~(y) - f~(y') - K(y - y') is " << worst_slack;
    rep.findings.push_back({"monotonicity probe", worst_slack >= -1e-9, os.str(), worst_slack});
  }
  if (s.coefficient_bound) {
    double worst_abs = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      ProbePoint p = probe_point(s, box, i);
      p.y1 = p.y2 = 0.0;
      p.z = {};
      for (const auto& nc : coeffs) worst_abs = std::max(worst_abs, std::fabs((*nc.c)(p.args(n, d))));
    }
    std::ostringstream os;
    os << "max |coefficient| " << worst_abs << " vs bound " << *s.coefficient_bound;
    rep.findings.push_back(
        {"coefficient-bound probe", worst_abs <= *s.coefficient_bound * (1.0 + 1e-12), os.str(), worst_abs});
  }
  {
    std::ostringstream os;
    os << "comparison for the jump-regime generator f - lambda*h needs a jump slope >= -lambda, i.e. K >= 0; K = "
       << s.K;
    rep.advisories.push_back({"jump-slope comparison condition", s.K >= 0.0, os.str(), s.K});
  }
  return rep;
}

}  // namespace nsdg
