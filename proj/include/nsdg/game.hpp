#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsdg/bsde.hpp"
#include "nsdg/dynamics.hpp"
#include "nsdg/isaacs_pde.hpp"
#include "nsdg/model.hpp"

namespace nsdg {

class GameError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Regime-indexed lattice storage: one slot per spatial node (k, j).
inline std::size_t spatial_id(int k, int j) {
  return static_cast<std::size_t>(k) * static_cast<std::size_t>(k) + static_cast<std::size_t>(j + k);
}

// One step of the decoupled game BSDE at lattice node (k, j) in regime r
// under controls (iu, iv); `nj` / `jp` are the no-jump / jumped child values.
double game_step(const GameSpec& spec, const MarkovTree& tree, int k, int j, int regime, int iu, int iv,
                 const double* nj, const double* jp);

// ---------------------------------------------------------------------------
// Strategies and the pairing of two delayed strategies.

struct PlayState {
  int k = 0;
  int j = 0;  // lattice index (nearest cell when off-lattice)
  int parity = 0;
  double x = 0.0;
};

struct History {
  PlayState now;
  std::span<const PlayState> states;  // states 0..k
  std::span<const int> own;            // own controls 0..k-1
  std::span<const int> opponent;       // opponent controls 0..k-1
};

class Strategy {
 public:
  virtual ~Strategy() = default;
  // Control index at step h.now.k; may read the opponent only through k-1.
  virtual int control(const History& h) const = 0;
};

class ConstantStrategy : public Strategy {
 public:
  explicit ConstantStrategy(int index) : index_(index) {}
  int control(const History&) const override { return index_; }

 private:
  int index_;
};

// Open-loop sequence of control indices.
class OpenLoopStrategy : public Strategy {
 public:
  explicit OpenLoopStrategy(std::vector<int> seq) : seq_(std::move(seq)) {}
  int control(const History& h) const override { return seq_.at(static_cast<std::size_t>(h.now.k)); }

 private:
  std::vector<int> seq_;
};

// Lambda-backed strategy, used for echo-type strategies in tests.
class FunctionStrategy : public Strategy {
 public:
  explicit FunctionStrategy(std::function<int(const History&)> f) : f_(std::move(f)) {}
  int control(const History& h) const override { return f_(h); }

 private:
  std::function<int(const History&)> f_;
};

// Lattice cells: the cell of a state at step k is the nearest lattice index.
struct CellMap {
  const MarkovTree* tree = nullptr;
  int cell(int k, double x) const;
};

// Control table per (k, cell, regime of player 1), stored per lattice node id
// (the parity bit fixes the regime).
class FeedbackStrategy : public Strategy {
 public:
  FeedbackStrategy(const MarkovTree& tree, std::vector<int> table) : tree_(&tree), table_(std::move(table)) {}
  int control(const History& h) const override;
  int at(int k, int j, int parity) const { return table_[MarkovTree::node_id(k, j, parity)]; }
  const std::vector<int>& table() const { return table_; }

 private:
  const MarkovTree* tree_;
  std::vector<int> table_;
};

using Stepper = std::function<PlayState(const PlayState& s, int iu, int iv)>;

// Markov-chain moves on the lattice from uniform draws keyed by (seed, scenario, k).
Stepper lattice_stepper(const MarkovTree& tree, std::uint64_t seed, int scenario);
// Euler moves driven by a scenario bundle; parity follows ΔN.
Stepper euler_stepper(const GameSpec& spec, const ScenarioBundle& sc, int scenario, const MarkovTree& cells);

struct PlayPath {
  std::vector<PlayState> states;  // 0..M
  std::vector<int> u, v;          // 0..M-1
};

// Resolves α(v) = u, β(u) = v step by step (delay of one step).
PlayPath pair_fixed_point(const Strategy& alpha, const Strategy& beta, const PlayState& start, int M,
                          const Stepper& step);

// ---------------------------------------------------------------------------
// Tree dynamic programming.

struct TreeValueResult {
  Orientation orientation;
  int M = 0;
  std::array<std::vector<double>, 2> V;   // [regime-1][spatial_id]
  std::array<std::vector<int>, 2> iu, iv;  // optimizers per node, levels < M
  double root(int regime) const { return V[regime - 1][0]; }
};

using RegimeTerminal = std::function<double(int regime, double x)>;

// Backward induction of the optimized one-step game semigroup.
TreeValueResult tree_value(const GameSpec& spec, const MarkovTree& tree, const Orientation& o,
                           const RegimeTerminal& terminal = nullptr);

// sup over player-`favor` strategies, inf over the opponent's, of J_i; one-step
// delayed strategies enumerated exhaustively (M <= 2, |U|, |V| <= 2).
struct BruteForceResult {
  double value = 0.0;
  std::size_t outer_count = 0;
  std::size_t inner_count = 0;
};
BruteForceResult brute_force_value(const GameSpec& spec, const MarkovTree& tree, int favor, int start_regime);

// ---------------------------------------------------------------------------
// Value fields used by the Nash construction.

class FieldSet {
 public:
  // Exact tree values on the lattice of `tree`.
  static FieldSet from_tree(const MarkovTree& tree, TreeValueResult p1, TreeValueResult p2);
  // PDE fields; game step k reads slice k * steps_per_level.
  static FieldSet from_pde(ValueField p1, ValueField p2, int steps_per_level);

  // Field of orientation `favor` for regime r (p1: W1 / W2', p2: W1' / W2).
  // `outside` is set when a PDE lookup leaves the domain (the value is then
  // clamped to the boundary).
  double value(int favor, int regime, int k, double x, bool* outside = nullptr) const;
  std::string source() const { return tree_ ? "tree" : "pde"; }

 private:
  const MarkovTree* tree_ = nullptr;
  std::shared_ptr<const std::array<TreeValueResult, 2>> tv_;
  std::shared_ptr<const std::array<ValueField, 2>> pde_;
  int steps_ = 1;
};

// Regime of player j at a node of parity p, started from j.
inline int player_regime(int j, int parity) { return regime_at(j, parity); }

struct EpsPair {
  TreeControls controls;
  double max_drop = 0.0;               // max over nodes of the selected max(drop1, drop2)
  double cumulative_bound = 0.0;       // M * max(max_drop, 0)
  std::array<double, 2> player_drop{};  // per player max drop of the selected pair
  nlohmann::json to_json() const;
};
EpsPair build_eps_pair(const GameSpec& spec, const MarkovTree& tree, const FieldSet& fields);

// Punisher side `punisher` (1 or 2) against the other player.
class PunishmentStrategy : public Strategy {
 public:
  PunishmentStrategy(int punisher, const TreeControls& nominal, std::vector<int> punish_table);
  int control(const History& h) const override;
  // First step where the opponent left the nominal pair, or -1.
  int detection(const History& h) const;

 private:
  int side_;
  TreeControls nominal_;
  std::vector<int> punish_;
};
// Punish table: u = argmin_u max_v G_{r2}[F(p2)] against player 2, or
// v = argmin_v max_u G_{r1}[F(p1)] against player 1.
PunishmentStrategy build_punishment(const GameSpec& spec, const MarkovTree& tree, const FieldSet& fields,
                                    const TreeControls& nominal, int punished);
std::vector<int> punishment_table(const GameSpec& spec, const MarkovTree& tree, const FieldSet& fields, int punished);

// Deviator's best one-step reply against the punisher's table, per node.
std::vector<int> deviation_table(const GameSpec& spec, const MarkovTree& tree, const FieldSet& fields,
                                 const std::vector<int>& punish_table, int deviator);

// ---------------------------------------------------------------------------
// Nash certificate.

struct WilsonInterval {
  double low = 0.0;
  double high = 1.0;
};
WilsonInterval wilson(std::size_t successes, std::size_t n, double z = 2.5758293035489004);

struct DeltaRow {
  int k = 0;
  int j = 1;  // player
  double p_hat = 1.0;
  double ci_low = 0.0;
  bool pass = true;
};

struct NashCertificate {
  double epsilon = 0.0;
  std::array<double, 2> e{};         // payoff estimates
  std::array<double, 2> se{};        // standard errors
  std::array<double, 2> target{};    // e_j in the payoff condition
  std::vector<DeltaRow> per_delta;
  double payoff_gap = 0.0;
  double max_violation = 0.0;  // max over rows of 1 - p_hat
  std::size_t excluded = 0;
  std::uint64_t seed = 0;
  int scenario_count = 0;
  std::string field_source;
  bool pass = false;
  nlohmann::json to_json() const;
};

struct NashCheckOptions {
  int scenarios = 10000;
  std::uint64_t seed = 1;
  std::optional<std::array<double, 2>> target;  // default: exact tree payoff of the pair
};

NashCertificate nash_characterization_check(const GameSpec& spec, const MarkovTree& tree,
                                            const TreeControls& pair, double epsilon, const FieldSet& fields,
                                            const NashCheckOptions& opt);

struct NashPayoff {
  std::array<double, 2> e{};
  std::array<double, 2> se{};
  double epsilon = 0.0;  // smallest passing ε (or the last tried)
  bool pass = false;
  std::vector<NashCertificate> certificates;
  std::vector<std::array<double, 2>> cauchy;  // |e(ε_k) - e(ε_{k+1})|
  EpsPair pair;
  nlohmann::json to_json() const;
};

NashPayoff extract_nash_payoff(const GameSpec& spec, const MarkovTree& tree, const FieldSet& fields,
                               const std::vector<double>& schedule, const NashCheckOptions& opt);

// Smallest ε the Wilson bound can certify with S scenarios and no violation.
double wilson_floor(int scenarios);

// ---------------------------------------------------------------------------
// Dynamic programming principle against PDE fields.

struct DppLevel {
  int J = 0;
  int M_pde = 0;
  int tree_steps = 0;
  double residual = 0.0;  // max over orientation and start regime
  std::size_t excluded = 0;
};

struct DppReport {
  std::vector<DppLevel> levels;
  std::string verdict;
  double t = 0.0;
  std::vector<double> xs;
  double delta = 0.0;
  nlohmann::json to_json() const;
};

// Residual of one DPP step from (t_k, x) over `delta_steps` PDE steps using a
// tree with `tree_steps` steps; terminal data interpolated from the fields.
DppLevel dpp_residual(const GameSpec& spec, const ValueField& p1, const ValueField& p2, int k, double x,
                      int delta_steps, int tree_steps);

struct DppOptions {
  double x_min = -4.0;
  double x_max = 4.0;
  int J0 = 40;
  int levels = 3;
  int tree_steps0 = 1;
  std::vector<double> xs = {-0.5, 0.0, 0.5};  // residual is the max over these roots
  double t0 = 0.0;
  double delta_fraction = 0.25;  // δ as a fraction of T - t0
};
DppReport dpp_check(const GameSpec& spec, const DppOptions& opt);

}  // namespace nsdg
