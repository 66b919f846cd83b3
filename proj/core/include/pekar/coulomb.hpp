#pragma once

// Coulomb functionals of weighted point clouds: the potential
// Lambda mu(x) = sum_i w_i V(x - p_i), the self-energy H(mu) = <mu, Lambda mu>,
// cross energies, the convex time-split of H for path occupation measures,
// and the sup-norm distance of Lambda mu to the orbit of shifted maximizers.
//
// All kernels are V(x) = (|x|^2 + eta^2)^{-1/2}. With eta = 0 the diagonal
// i = j is excluded; with eta > 0 it is included.

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "pekar/pekar_solver.hpp"
#include "pekar/vec3.hpp"

namespace pekar {

struct SoftenedKernel {
  double eta = 0.0;

  double operator()(double r2) const { return 1.0 / std::sqrt(r2 + eta * eta); }
  double operator()(const Vec3& d) const { return (*this)(norm2(d)); }
};

/// Weighted 3D point cloud with a softening length.
class OccupationMeasure {
 public:
  OccupationMeasure() = default;
  /// Throws std::invalid_argument when weights are negative, do not sum to 1
  /// within 1e-12, coordinates are not finite, or eta is outside [0, 1).
  OccupationMeasure(std::vector<Vec3> points, std::vector<double> weights, double softening);

  /// Equal weights 1/n.
  static OccupationMeasure uniform(std::vector<Vec3> points, double softening);

  std::span<const Vec3> points() const { return points_; }
  std::span<const double> weights() const { return weights_; }
  double softening() const { return softening_; }
  std::size_t size() const { return points_.size(); }
  SoftenedKernel kernel() const { return SoftenedKernel{softening_}; }

  OccupationMeasure translated(const Vec3& v) const;
  /// Sub-measure of points [first, last), renormalized.
  OccupationMeasure slice(std::size_t first, std::size_t last) const;

  /// Weighted coordinate-wise median.
  Vec3 median() const;
  /// Axis-aligned bounding box (min, max).
  std::pair<Vec3, Vec3> bounding_box() const;

 private:
  std::vector<Vec3> points_;
  std::vector<double> weights_;
  double softening_ = 0.0;
};

class CollisionError : public std::invalid_argument {
 public:
  CollisionError(std::size_t i, std::size_t j);
  std::size_t first() const { return i_; }
  std::size_t second() const { return j_; }

 private:
  std::size_t i_;
  std::size_t j_;
};

/// Lambda mu(x). For eta = 0, points coinciding with x are skipped.
double lambda_at(const OccupationMeasure& mu, const Vec3& x);

/// H(mu) = sum_ij w_i w_j V(p_i - p_j), rows compensated and combined in a
/// fixed order so the value is independent of the worker count. Throws
/// CollisionError for duplicate points when eta = 0.
double hamiltonian(const OccupationMeasure& mu);

/// Plain double loop over all ordered pairs; reference for hamiltonian().
double hamiltonian_reference(const OccupationMeasure& mu);

/// <mu, Lambda nu>, kernel softened with max(eta_mu, eta_nu).
double cross_energy(const OccupationMeasure& mu, const OccupationMeasure& nu);
/// <mu, Lambda psi0^2(. - center)>.
double cross_energy(const OccupationMeasure& mu, const PekarSolution& sol, const Vec3& center);

struct SplitCheck {
  double lhs = 0.0;          // t H(L_t)
  double head = 0.0;         // (t0^2 / t) H(L_t0)
  double cross = 0.0;        // 2 (t0 (t - t0) / t) <L_t0, Lambda L_{t0,t}>
  double tail = 0.0;         // ((t - t0)^2 / t) H(L_{t0,t})
  double residual = 0.0;     // |lhs - (head + cross + tail)|
  double relative() const { return residual / std::abs(lhs); }
};

/// Verifies t H(L_t) = (t0^2/t) H(L_t0) + 2 (t0 (t-t0)/t) <L_t0, Lambda L_{t0,t}>
/// + ((t-t0)^2/t) H(L_{t0,t}) for an ordered, equally weighted occupation
/// measure. t0 * size / t must be an integer; eta must be positive.
SplitCheck splitting_check(const OccupationMeasure& lt, double t0, double t);

/// Axis-aligned lattice center + spacing * (i, j, k), |i|, |j|, |k| <= counts.
struct EvalGrid {
  Vec3 center;
  std::array<std::size_t, 3> half_counts{0, 0, 0};
  double spacing = 1.0;

  std::size_t size() const;
  std::vector<Vec3> points() const;

  /// Covers the bounding box of mu plus `margin` around `center`, spacing
  /// chosen so that the point count stays within `budget`.
  static EvalGrid covering(const OccupationMeasure& mu, const Vec3& center, double margin, std::size_t budget,
                           double min_spacing = 0.05);
};

struct OrbitDistance {
  double distance = 0.0;
  Vec3 best_shift;
};

/// min over candidate shifts w of max over grid points x of
/// |Lambda mu(x) - Lambda psi0^2(|x - w|)|; ties go to the lexicographically
/// smallest w.
OrbitDistance orbit_sup_distance(const OccupationMeasure& mu, const PekarSolution& sol, const EvalGrid& grid,
                                 std::span<const Vec3> shift_candidates);

struct ShiftSearchOptions {
  double margin = 3.0;
  std::size_t grid_budget = 6000;
  std::size_t coarse_per_axis = 9;  // level-0 candidate lattice resolution
  std::size_t refinements = 2;
  bool record_runner_up = false;
};

struct ShiftSearch {
  Vec3 shift;
  double distance = 0.0;
  double resolution = 0.0;  // final lattice spacing
  /// Best level-0 candidate farther than two coarse cells from `shift`.
  std::optional<OrbitDistance> runner_up;
};

/// Best-coincidence shift Y(mu): coarse lattice over the bounding box of mu
/// anchored at its median, then `refinements` levels of halving refinement.
ShiftSearch best_shift(const OccupationMeasure& mu, const PekarSolution& sol, const ShiftSearchOptions& opts = {});

/// Wasserstein-1 distances between the per-axis marginals of mu and of
/// psi0^2(. - shift).
std::array<double, 3> marginal_w1(const OccupationMeasure& mu, const PekarSolution& sol, const Vec3& shift);

/// CSV with header "x,y,z,w".
void write_measure_csv(std::ostream& os, const OccupationMeasure& mu);
OccupationMeasure read_measure_csv(std::istream& is, double softening);
nlohmann::json measure_sidecar(const OccupationMeasure& mu);

}  // namespace pekar
