#pragma once

// Discretized Brownian paths, their occupation measures and the
// Wiener-reversible segment proposals used by the path sampler.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "pekar/coulomb.hpp"
#include "pekar/vec3.hpp"

namespace pekar {

/// Positions W_0, W_h, ..., W_{mh}.
struct DiscretePath {
  double h = 0.0;
  std::vector<Vec3> positions;
  bool origin_start = true;

  std::size_t steps() const { return positions.empty() ? 0 : positions.size() - 1; }
  double horizon() const { return h * static_cast<double>(steps()); }
  const Vec3& endpoint() const { return positions.back(); }
  DiscretePath translated(const Vec3& v) const;
};

/// Number of steps t / h; throws std::invalid_argument when t / h is not an
/// integer (to 1e-9 relative) or h <= 0.
std::size_t step_count(double t, double h);

/// Brownian path from the origin with i.i.d. N(0, h I) increments.
DiscretePath sample_wiener(double t, double h, std::uint64_t seed);

/// Default softening eta = 0.1 sqrt(h) for path-derived measures.
double default_softening(double h, double scale = 0.1);

/// Segment midpoints (W_k + W_{k+1}) / 2 with weight 1/m each.
OccupationMeasure occupation_of(const DiscretePath& path, double softening);
inline OccupationMeasure occupation_of(const DiscretePath& path) {
  return occupation_of(path, default_softening(path.h));
}
std::vector<Vec3> midpoints(const DiscretePath& path);

template <class Rng>
std::vector<Vec3> standard_normals(std::size_t count, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Vec3> out(count);
  for (auto& v : out) v = {g(rng), g(rng), g(rng)};
  return out;
}

/// New positions i+1..j-1 of a Brownian bridge pinned at positions[i] and
/// positions[j], built sequentially from `normals` (j - i - 1 of them).
/// Zero normals give the straight line between the endpoints.
std::vector<Vec3> bridge_segment(std::span<const Vec3> positions, double h, std::size_t i, std::size_t j,
                                 std::span<const Vec3> normals);

/// Free Brownian continuation: new positions i+1..m started at positions[i].
std::vector<Vec3> free_segment(std::span<const Vec3> positions, double h, std::size_t i,
                               std::span<const Vec3> normals);

/// Whole path with positions i+1..j-1 redrawn as a bridge. Requires
/// 0 <= i < j <= m; adjacent indices return the path unchanged.
DiscretePath propose_bridge(const DiscretePath& path, std::size_t i, std::size_t j, std::span<const Vec3> normals);
template <std::uniform_random_bit_generator Rng>
DiscretePath propose_bridge(const DiscretePath& path, std::size_t i, std::size_t j, Rng& rng) {
  const std::size_t k = j > i + 1 ? j - i - 1 : 0;
  const auto z = standard_normals(k, rng);
  return propose_bridge(path, i, j, z);
}

/// log density of the Gaussian increments positions[i] -> ... -> positions[j].
double log_wiener_segment(std::span<const Vec3> positions, double h, std::size_t i, std::size_t j);

/// log density of positions i+1..j-1 under the sequential bridge proposal.
double log_bridge_density(std::span<const Vec3> positions, double h, std::size_t i, std::size_t j);

/// Inserts a bridge midpoint into every step, halving h.
DiscretePath refine_path(const DiscretePath& path, std::uint64_t seed);

/// Left-point Riemann sum h * sum_{k < m} f(W_k).
template <class F>
double time_integral(const DiscretePath& path, F&& f) {
  double s = 0.0;
  for (std::size_t k = 0; k + 1 < path.positions.size(); ++k) s += f(path.positions[k]);
  return path.h * s;
}

}  // namespace pekar
