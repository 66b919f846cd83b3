#pragma once

// Radial grids and the numerics shared by every other module: quadrature,
// finite differences and interpolation of rotationally symmetric functions.

#include <cstddef>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <span>
#include <string>
#include <vector>

#include "pekar/vec3.hpp"

namespace pekar {

/// Uniform radial grid r_i = (i+1)*dr, i = 0..n-1, so that r_{n-1} = r_max.
/// The origin is never a node; callers that need f(0) use the parity of the
/// stored function (see RadialFunction).
class RadialGrid {
 public:
  RadialGrid() = default;
  RadialGrid(double r_max, std::size_t n);

  double r_max() const { return r_max_; }
  std::size_t size() const { return n_; }
  double dr() const { return dr_; }
  double node(std::size_t i) const { return static_cast<double>(i + 1) * dr_; }
  std::vector<double> nodes() const;

  friend bool operator==(const RadialGrid&, const RadialGrid&) = default;

 private:
  double r_max_ = 0.0;
  std::size_t n_ = 0;
  double dr_ = 0.0;
};

inline constexpr std::size_t kMinGridNodes = 16;

/// Throws std::invalid_argument for r_max <= 0 or n < 16.
RadialGrid make_grid(double r_max, std::size_t n);

/// Behaviour of a radial profile under r -> -r. Decides how values between the
/// origin and the first node are reconstructed.
enum class Parity {
  none,  // extrapolate from the first three nodes
  even,  // f(-r) = f(r): densities, potentials, psi
  odd,   // f(-r) = -f(r): radial derivatives such as the drift
};

/// Values of a rotationally symmetric function on a RadialGrid.
class RadialFunction {
 public:
  RadialFunction() = default;
  RadialFunction(RadialGrid grid, std::vector<double> values, Parity parity = Parity::none);

  /// Samples f at every node.
  template <class F>
  static RadialFunction from(const RadialGrid& grid, F&& f, Parity parity = Parity::none) {
    std::vector<double> v(grid.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(grid.node(i));
    return RadialFunction(grid, std::move(v), parity);
  }

  const RadialGrid& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  std::vector<double>& mutable_values() { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::size_t size() const { return values_.size(); }
  Parity parity() const { return parity_; }
  void set_parity(Parity p) { parity_ = p; }

  /// Value at r = 0 reconstructed from the parity (0 for odd functions).
  double value_at_origin() const;

 private:
  RadialGrid grid_;
  std::vector<double> values_;
  Parity parity_ = Parity::none;
};

/// int_0^{r_max} r^power f(r) dr by composite Simpson on {0} U nodes
/// (Simpson 3/8 closes an odd interval count). power must be 0, 1 or 2.
double integrate_radial(const RadialFunction& f, int power);

/// 4*pi * int r^2 f(r) dr, i.e. the 3D integral of a radial function.
double integrate_3d(const RadialFunction& f);

/// Second-order central differences in the interior, second-order one-sided
/// stencils at both ends. The parity of the result is flipped.
RadialFunction radial_derivative(const RadialFunction& f);

/// Signalled when interpolate() is asked for r outside [0, r_max].
class ExtrapolationError : public std::domain_error {
 public:
  explicit ExtrapolationError(double r);
  double r() const { return r_; }

 private:
  double r_;
};

/// Monotone piecewise-cubic Hermite interpolation. Slopes are centered
/// differences limited by the Fritsch-Carlson condition, so the interpolant
/// is exact at nodes, C^1 and third-order accurate on smooth monotone data.
/// Between 0 and the first node the parity decides the reconstruction.
double interpolate(const RadialFunction& f, double r);

/// Writes "r,<value_name>" followed by one row per node.
void write_csv(std::ostream& os, const RadialFunction& f, const std::string& value_name = "value");

/// Inverse-CDF sampler for a radius whose density (in r, not in R^3) is given
/// on a grid, e.g. 4*pi*r^2*psi(r)^2. The density need not be normalized.
class RadialSampler {
 public:
  explicit RadialSampler(const RadialFunction& radial_density);

  double total_mass() const { return mass_; }
  /// Inverse CDF, linear between nodes. u in [0, 1].
  double quantile(double u) const;
  /// CDF of the radius at r (clamped to [0, 1]).
  double cdf(double r) const;
  /// Probability of the radius falling in [a, b).
  double bin_probability(double a, double b) const { return cdf(b) - cdf(a); }

  template <class Rng>
  double sample_radius(Rng& rng) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return quantile(u(rng));
  }

  /// Radius from the density, direction uniform on the sphere.
  template <class Rng>
  Vec3 sample_point(Rng& rng) const {
    const double r = sample_radius(rng);
    return r * uniform_direction(rng);
  }

  template <class Rng>
  static Vec3 uniform_direction(Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    for (;;) {
      Vec3 v{g(rng), g(rng), g(rng)};
      const double n = norm(v);
      if (n > 1e-12) return v * (1.0 / n);
    }
  }

 private:
  std::vector<double> r_;    // 0 followed by grid nodes
  std::vector<double> cdf_;  // normalized cumulative mass at r_
  double mass_ = 0.0;
};

}  // namespace pekar
