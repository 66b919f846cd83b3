#pragma once

// Metropolis-Hastings sampling of the tilted path measure
//   dP_beta ∝ exp{beta t H(L_t)} dP
// on a time-discretized Brownian path, with incremental Hamiltonian updates,
// a tempering ladder in beta and thermodynamic integration of log Z_t.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pekar/coulomb.hpp"
#include "pekar/path.hpp"
#include "pekar/pekar_solver.hpp"

namespace pekar {

enum class MoveType { bridge = 0, endpoint = 1, translate = 2 };
inline constexpr std::size_t kMoveTypes = 3;
const char* move_name(MoveType m);

struct MoveMix {
  double bridge = 0.7;
  double endpoint = 0.2;
  double translate = 0.1;         // ignored while the origin is pinned
  double mean_segment_fraction = 0.125;  // mean redraw length / m
  double translate_scale = 0.5;   // per-axis sd of a whole-path shift

  void validate() const;
};

struct ChainConfig {
  double t = 8.0;
  double h = 1.0 / 64.0;
  double beta = 1.0;
  double softening_scale = 0.1;  // eta = softening_scale * sqrt(h)
  std::size_t burn_in = 100000;
  std::size_t draws = 1000;
  std::size_t thinning = 100;
  std::size_t checkpoint_interval = 1000;
  bool origin_start = true;
  bool record_shift = true;  // Y(L_t) and orbit distance; needs a solution
  MoveMix moves;
  ShiftSearchOptions shift;

  std::size_t steps() const { return step_count(t, h); }
  double softening() const { return default_softening(h, softening_scale); }
  void validate() const;
};

nlohmann::json to_json(const ChainConfig& c);
ChainConfig chain_config_from_json(const nlohmann::json& j, ChainConfig base = {});

struct MoveStats {
  std::array<std::uint64_t, kMoveTypes> proposed{};
  std::array<std::uint64_t, kMoveTypes> accepted{};
  double rate(MoveType m) const;
};

class CacheDivergence : public std::runtime_error {
 public:
  CacheDivergence(std::uint64_t step, double deviation);
  std::uint64_t step() const { return step_; }
  double deviation() const { return deviation_; }

 private:
  std::uint64_t step_;
  double deviation_;
};

/// A proposed move, kept so the acceptance decision and the detailed-balance
/// check can both be evaluated from the same data.
struct Proposal {
  MoveType type = MoveType::bridge;
  std::size_t first = 0;  // positions first+1 .. last-1 (bridge) or first+1 .. m (endpoint) change
  std::size_t last = 0;
  Vec3 shift;                     // translate only
  std::vector<Vec3> positions;    // replacement positions
  std::vector<double> new_rows;   // row sums of the changed midpoints
  double delta_h = 0.0;
};

/// Structure-of-arrays copy of the occupation points, for the kernel sums.
struct PointColumns {
  std::vector<double> x, y, z;

  PointColumns() = default;
  explicit PointColumns(std::span<const Vec3> pts);
  std::size_t size() const { return x.size(); }
  Vec3 operator[](std::size_t i) const { return {x[i], y[i], z[i]}; }
  void set(std::size_t i, const Vec3& v) { x[i] = v.x, y[i] = v.y, z[i] = v.z; }
};

/// sum_{l in [lo, hi)} (|p - q_l|^2 + eta^2)^{-1/2}, with a fixed four-lane
/// summation order.
double kernel_sum(const PointColumns& q, std::size_t lo, std::size_t hi, const Vec3& p, double eta2);

/// Path, its occupation-measure row sums S_k = sum_l V(p_k - p_l) and the
/// current H = sum_k S_k / m^2.
class ChainState {
 public:
  /// Throws std::invalid_argument unless softening > 0 and the path has a step.
  ChainState(DiscretePath path, double beta, double softening);

  const DiscretePath& path() const { return path_; }
  double beta() const { return beta_; }
  void set_beta(double b) { beta_ = b; }
  double softening() const { return kernel_.eta; }
  double hamiltonian() const { return h_; }
  double horizon() const { return path_.horizon(); }
  std::uint64_t steps_taken() const { return steps_; }
  const MoveStats& stats() const { return stats_; }
  std::span<const double> row_sums() const { return rows_; }
  double max_checkpoint_deviation() const { return max_deviation_; }
  std::size_t checkpoints() const { return checkpoints_; }

  /// H recomputed from scratch.
  double recompute() const;
  /// Compares the cache with a full recomputation, then resets the cache.
  /// Throws CacheDivergence above 1e-6; returns the deviation.
  double checkpoint();

  /// Draws a proposal of the given type without changing the state.
  template <class Rng>
  Proposal propose(MoveType type, const MoveMix& mix, Rng& rng) const;
  /// Fills new_rows and delta_h.
  void evaluate(Proposal& p) const;
  void apply(Proposal&& p);
  /// log acceptance ratio beta t (H' - H).
  double log_acceptance(const Proposal& p) const { return beta_ * horizon() * p.delta_h; }

  void count(MoveType m, bool accepted);
  void tick() { ++steps_; }

  /// Exchanges paths and caches with another state; betas stay put.
  void swap_configuration(ChainState& other);

 private:
  std::vector<Vec3> changed_midpoints(const Proposal& p, std::size_t& lo, std::size_t& hi) const;
  void rebuild_rows();

  DiscretePath path_;
  double beta_;
  SoftenedKernel kernel_;
  PointColumns mids_;
  std::vector<double> rows_;
  double h_ = 0.0;
  std::uint64_t steps_ = 0;
  MoveStats stats_;
  double max_deviation_ = 0.0;
  std::size_t checkpoints_ = 0;
};

/// Picks a move type from the mix (translate only when the origin is free).
template <class Rng>
MoveType draw_move(const MoveMix& mix, bool origin_start, Rng& rng) {
  const double tr = origin_start ? 0.0 : mix.translate;
  std::uniform_real_distribution<double> u(0.0, mix.bridge + mix.endpoint + tr);
  const double x = u(rng);
  if (x < mix.bridge) return MoveType::bridge;
  if (x < mix.bridge + mix.endpoint) return MoveType::endpoint;
  return MoveType::translate;
}

/// Segment length in [1, max_len], geometric with the given mean.
template <class Rng>
std::size_t draw_length(double mean, std::size_t max_len, Rng& rng) {
  const double p = 1.0 / std::max(mean, 1.0);
  std::geometric_distribution<std::size_t> g(std::min(p, 1.0));
  return std::min<std::size_t>(1 + g(rng), max_len);
}

template <class Rng>
Proposal ChainState::propose(MoveType type, const MoveMix& mix, Rng& rng) const {
  const std::size_t m = path_.steps();
  Proposal p;
  p.type = type;
  const double mean = std::max(2.0, mix.mean_segment_fraction * static_cast<double>(m));
  switch (type) {
    case MoveType::bridge: {
      const std::size_t len = std::max<std::size_t>(2, draw_length(mean, m, rng));
      std::uniform_int_distribution<std::size_t> start(0, m - len);
      p.first = start(rng);
      p.last = p.first + len;
      const auto z = standard_normals(len - 1, rng);
      p.positions = bridge_segment(path_.positions, path_.h, p.first, p.last, z);
      break;
    }
    case MoveType::endpoint: {
      const std::size_t len = draw_length(mean, m, rng);
      p.first = m - len;
      p.last = m + 1;
      const auto z = standard_normals(len, rng);
      p.positions = free_segment(path_.positions, path_.h, p.first, z);
      break;
    }
    case MoveType::translate: {
      std::normal_distribution<double> g(0.0, mix.translate_scale);
      p.shift = {g(rng), g(rng), g(rng)};
      p.first = 0;
      p.last = 0;
      break;
    }
  }
  return p;
}

/// log[pi(x) q(y|x) a(x,y)] - log[pi(y) q(x|y) a(y,x)] for the proposal y,
/// where pi is the discretized tilted Wiener density. Zero under detailed
/// balance; only the changed segment enters.
double detailed_balance_defect(const ChainState& state, const Proposal& p, const MoveMix& mix);

/// One Metropolis-Hastings step; returns whether the move was accepted.
/// Runs a cache checkpoint every `checkpoint_interval` steps.
bool mh_step(ChainState& state, const ChainConfig& config, std::mt19937_64& rng);

struct ChainSample {
  std::uint64_t step = 0;
  double hamiltonian = 0.0;
  Vec3 shift;       // Y(L_t)
  Vec3 endpoint;    // W_t
  double orbit_distance = 0.0;
};

struct ChainOutput {
  ChainConfig config;
  std::uint64_t seed = 0;
  std::vector<ChainSample> samples;
  MoveStats stats;
  double max_checkpoint_deviation = 0.0;
  std::size_t checkpoints = 0;

  std::vector<double> hamiltonians() const;
  std::vector<double> shift_radii() const;
  std::vector<double> endpoint_radii() const;
  std::vector<double> orbit_distances() const;
};

/// Runs one chain from a fresh Wiener path. Throws std::invalid_argument when
/// shift statistics are requested without a solution.
ChainOutput run_chain(const ChainConfig& config, const PekarSolution* sol, std::uint64_t seed);

struct LadderConfig {
  ChainConfig chain;             // beta field ignored
  std::vector<double> betas;     // increasing, starts at 0 for integration
  bool replica_exchange = true;
  std::size_t swap_interval = 100;
  double swap_threshold = 0.05;  // flag adjacent pairs below this rate

  void validate() const;
};

/// Default 11-point grid 1 - (1 - k/10)^2, denser near beta = 1.
std::vector<double> default_beta_grid(std::size_t points = 11);

struct LadderOutput {
  std::vector<ChainOutput> chains;       // one per beta
  std::vector<double> swap_rates;        // adjacent pairs; empty without exchange
  std::vector<double> overlap;           // sample-based swap acceptance estimate
  std::vector<bool> flagged;             // pairs with poor overlap
};

/// Replica chains at every beta, optionally exchanging configurations between
/// neighbours every swap_interval sweeps. Replicas advance in parallel between
/// swap barriers; the result depends only on the seed and the ladder.
LadderOutput run_ladder(const LadderConfig& config, const PekarSolution* sol, std::uint64_t seed);

struct FreeEnergyEstimate {
  double t = 0.0;
  std::vector<double> betas;
  std::vector<double> mean_h;
  std::vector<double> se_h;
  double estimate = 0.0;         // (1/t) log Z_t
  double standard_error = 0.0;
  bool monotone = true;          // integrand nondecreasing within 2 standard errors
  std::vector<double> swap_rates;
  std::vector<double> overlap;
  std::vector<bool> flagged;
};

/// Trapezoid rule over beta for integrand means with independent errors.
FreeEnergyEstimate integrate_ladder(double t, const std::vector<double>& betas, const std::vector<double>& means,
                                    const std::vector<double>& errors);

FreeEnergyEstimate free_energy_ti(const LadderConfig& config, std::uint64_t seed);

/// Exact E[H(L_t)] under the discretized Wiener measure (midpoint occupation,
/// softened kernel), by one-dimensional quadrature per lag.
double wiener_mean_hamiltonian(double t, double h, double softening);
/// Continuum value sqrt(2/pi) (8/3) / sqrt(t).
double wiener_mean_hamiltonian_continuum(double t);

struct RefinementStudy {
  double coarse = 0.0;  // H at step h
  double fine = 0.0;    // H after bridge refinement to h/2
};
RefinementStudy refinement_study(const DiscretePath& path, double softening_scale, std::uint64_t seed);

nlohmann::json to_json(const ChainOutput& out);
/// Header step,H,Yx,Yy,Yz,Wx,Wy,Wz,orbit_dist.
void write_samples_csv(std::ostream& os, const ChainOutput& out);
nlohmann::json to_json(const FreeEnergyEstimate& fe);

}  // namespace pekar
