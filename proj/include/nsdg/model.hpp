#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsdg/expr.hpp"

namespace nsdg {

class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GameSpec {
  std::string name;
  int state_dim = 1;
  int brownian_dim = 1;
  double T = 1.0;
  double lambda = 1.0;
  double K = 0.0;
  double lipschitz_bound = 1.0;
  std::optional<double> coefficient_bound;
  std::vector<double> U;
  std::vector<double> V;
  std::vector<Coefficient> drift;      // state_dim entries
  std::vector<Coefficient> diffusion;  // state_dim x brownian_dim, row-major
  std::array<Coefficient, 2> ftilde;   // index 0 is component 1
  std::array<Coefficient, 2> Phi;

  // Coefficient evaluation helpers; `comp` is 1 or 2.
  double b(int row, double t, std::span<const double> x, double u, double v) const;
  double sigma(int row, int col, double t, std::span<const double> x, double u, double v) const;
  double f(int comp, double t, std::span<const double> x, double y1, double y2,
           std::span<const double> z, double u, double v) const;
  double terminal(int comp, std::span<const double> x) const;

  // Scalar-state shortcuts.
  double b1(double t, double x, double u, double v) const { return b(0, t, {&x, 1}, u, v); }
  double f1d(int comp, double t, double x, double y1, double y2, std::span<const double> z, double u,
             double v) const {
    return f(comp, t, {&x, 1}, y1, y2, z, u, v);
  }
  double terminal1d(int comp, double x) const { return terminal(comp, {&x, 1}); }
  // |σ|² and σ row 0 for a scalar state.
  double sigma_norm2(double t, double x, double u, double v) const;

  bool dynamics_control_free() const;
  bool control_free() const;
};

GameSpec spec_from_json(const nlohmann::json& j);
nlohmann::json spec_to_json(const GameSpec& s);
GameSpec load_spec_file(const std::string& path);

// Regime bookkeeping.
int m_parity(long long j);
int regime_at(int i, long long jump_count);
inline int other_regime(int r) { return 3 - r; }

struct FieldLabel {
  int index = 1;  // 1 or 2
  bool primed = false;
  std::string str() const;
  bool operator==(const FieldLabel&) const = default;
};
FieldLabel n_map(int j, int l);

// Decoupled driver f_i(t, x, y, h, z, u, v).
class DecoupledDriver {
 public:
  DecoupledDriver(const GameSpec& spec, int i);
  double operator()(double t, std::span<const double> x, double y, double h, std::span<const double> z,
                    double u, double v) const;
  int index() const { return i_; }
  // Lipschitz constant in (y, h, z) implied by the declared C.
  double lipschitz() const;

 private:
  const GameSpec* spec_;
  int i_;
};

// Box of coefficient arguments used by probes.
struct ProbeBox {
  double x_min = -3.0;
  double x_max = 3.0;
  double y_abs = 5.0;
  double z_abs = 5.0;
  int samples = 10000;
};

struct Finding {
  std::string name;
  bool pass = true;
  std::string detail;
  double statistic = 0.0;
};

struct ValidationReport {
  std::vector<Finding> findings;
  std::vector<Finding> advisories;  // informational; never change the verdict
  bool pass() const;
  nlohmann::json to_json() const;
};

ValidationReport validate_spec(const GameSpec& spec, const ProbeBox& box = {});

// Deterministic low-discrepancy point in [0,1)^dims (Halton, first primes).
double halton(std::size_t index, int dim);

}  // namespace nsdg
