#pragma once

#include <array>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsdg/dynamics.hpp"
#include "nsdg/model.hpp"

namespace nsdg {

class PdeError : public std::runtime_error {
 public:
  PdeError(const std::string& what, int suggested_M = 0) : std::runtime_error(what), suggested_M(suggested_M) {}
  int suggested_M;  // > 0 for CFL refusals
};

struct HamiltonianInputs {
  double t = 0.0;
  std::array<double, 3> x{};
  double y1 = 0.0;
  double y2 = 0.0;
  std::array<double, 3> p{};  // gradient
  std::array<double, 9> A{};  // Hessian, row-major n x n
  double u = 0.0;
  double v = 0.0;
};

// ½ tr(σσᵀA) + p·b + f̃_i(t, x, y1, y2, pσ, u, v).
double hamiltonian(const GameSpec& spec, int i, const HamiltonianInputs& in);

enum class MinimaxOrder { sup_u_inf_v, inf_v_sup_u, sup_v_inf_u, inf_u_sup_v };
const char* order_name(MinimaxOrder o);

struct MinimaxResult {
  double value = 0.0;
  int iu = 0;
  int iv = 0;
};

// Optimizes h[iu * nv + iv] in the given order; ties go to the lowest index.
MinimaxResult minimax(const std::vector<double>& h, int nu, int nv, MinimaxOrder order);
MinimaxResult minimax_hamiltonian(const GameSpec& spec, int i, HamiltonianInputs in, MinimaxOrder order);

struct GapSampleRanges {
  double x_min = -2.0;
  double x_max = 2.0;
  double y_abs = 1.0;
  double p_abs = 1.0;
  double A_abs = 1.0;
};
std::vector<HamiltonianInputs> default_gap_samples(const GameSpec& spec, const GapSampleRanges& r = {});

struct IsaacsGapReport {
  double gap_lower = 0.0;  // |inf_v sup_u − sup_u inf_v|
  double gap_upper = 0.0;  // |inf_u sup_v − sup_v inf_u|
  std::size_t samples = 0;
  bool isaacs() const { return gap_lower <= 1e-12 && gap_upper <= 1e-12; }
  nlohmann::json to_json() const;
};
IsaacsGapReport isaacs_gap(const GameSpec& spec, const std::vector<HamiltonianInputs>& samples);
IsaacsGapReport isaacs_gap(const GameSpec& spec);

struct SpaceGrid {
  double x_min = -4.0;
  double x_max = 4.0;
  int J = 80;  // interior nodes; nodes 0 and J+1 are the boundary
  SpaceGrid() = default;
  SpaceGrid(double lo, double hi, int J_);
  double dx() const { return (x_max - x_min) / (J + 1); }
  double x(int j) const { return j == J + 1 ? x_max : x_min + j * dx(); }
  int nodes() const { return J + 2; }
};

// (upper?, favoured player). Lower p1 yields (W1, W2'), lower p2 (W1', W2),
// upper p1 (U1, U2'), upper p2 (U1', U2).
struct Orientation {
  bool upper = false;
  int favor = 1;
  MinimaxOrder order() const;
  std::array<std::string, 2> labels() const;
  std::string name() const;
};

struct ValueField {
  Orientation orientation;
  SpaceGrid space;
  TimeGrid time;
  std::array<std::vector<double>, 2> W;  // (M+1) x (J+2) per component

  double at(int c, int k, int j) const { return W[c][static_cast<std::size_t>(k) * space.nodes() + j]; }
  double& at(int c, int k, int j) { return W[c][static_cast<std::size_t>(k) * space.nodes() + j]; }
  bool inside(double x) const { return x >= space.x_min && x <= space.x_max; }
  // Linear interpolation in x on slice k; x must lie in the domain.
  double interp(int c, int k, double x) const;
};

// Largest stable time step for the explicit sweep.
double cfl_dt(const GameSpec& spec, const SpaceGrid& grid, double t0);
int cfl_min_steps(const GameSpec& spec, const SpaceGrid& grid, double t0);

// One backward step: slices at k+1 in, slices at k out (per component).
void isaacs_step(const GameSpec& spec, const SpaceGrid& grid, const TimeGrid& time, MinimaxOrder order, int k,
                 const std::vector<double>& w1, const std::vector<double>& w2, std::vector<double>& out1,
                 std::vector<double>& out2);

ValueField solve_coupled_isaacs(const GameSpec& spec, const SpaceGrid& grid, const TimeGrid& time,
                                const Orientation& o);

// Refinement reports share {check, statistic, values_by_grid, verdict}.
struct RefinementLevel {
  int J = 0;
  int M = 0;
  double dx = 0.0;
  double dt = 0.0;
  std::vector<std::pair<std::string, double>> values;
};
nlohmann::json refinement_json(const std::string& check, const std::string& statistic,
                               const std::vector<RefinementLevel>& levels, const std::string& verdict,
                               const nlohmann::json& extra = nlohmann::json::object());

struct CoincidenceReport {
  std::string verdict;  // PASS, FAIL or INCONCLUSIVE
  IsaacsGapReport gap;
  std::vector<RefinementLevel> levels;  // values: p1, p2 sup-norm differences
  double min_upper_minus_lower = 0.0;   // one-sided check
  std::string note;
  nlohmann::json to_json() const;
};
// Solves the lower and upper systems in both orientations on each level.
CoincidenceReport coincidence_check(const GameSpec& spec, double t0, const std::vector<SpaceGrid>& grids,
                                    const std::vector<int>& Ms);

struct RegularityStats {
  double spatial_quotient = 0.0;
  double holder_ratio = 0.0;
  double growth = 0.0;
};
RegularityStats field_regularity(const ValueField& f, int exclude = 3);

struct RegularityReport {
  std::vector<RefinementLevel> levels;
  bool stable = true;    // within 20% across consecutive levels
  bool diverging = false;  // some statistic more than doubled
  std::string verdict;
  nlohmann::json to_json() const;
};
RegularityReport field_regularity_check(const GameSpec& spec, double t0, const SpaceGrid& grid,
                                        const std::vector<int>& Ms, const Orientation& o);

// Interior exclusion used by acceptance statistics.
inline constexpr int kBoundaryExclusion = 3;

// Writes k,t,j,x then one column per supplied field component.
void write_fields_csv(std::ostream& os, const std::vector<const ValueField*>& fields);

}  // namespace nsdg
