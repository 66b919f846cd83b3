#pragma once

// Euler-Maruyama simulation of dX = dW + (grad psi / psi)(X) dt for a radial
// tilt psi, and the path functionals attached to it: the Girsanov density of
// Wiener measure with respect to the tilted process, the pathwise
// Euler-Lagrange identity and the Feynman-Kac weight of the Pekar tilt.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <random>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "pekar/path.hpp"
#include "pekar/pekar_solver.hpp"
#include "pekar/stats.hpp"

namespace pekar {

/// A positive radial function psi seen through log psi, b = psi'/psi and
/// Delta psi / psi.
class RadialTilt {
 public:
  virtual ~RadialTilt() = default;
  /// b(r); `far_field` is set when an asymptotic extension was used.
  virtual double drift(double r, bool* far_field = nullptr) const = 0;
  virtual double log_psi(double r) const = 0;
  virtual double laplacian_ratio(double r) const = 0;
  /// CDF of |X| under the stationary density psi^2.
  virtual double stationary_cdf(double r) const = 0;
  /// Natural radial extent (histogram range, blow-up scale).
  virtual double extent() const = 0;
};

enum class LaplacianSource {
  euler_lagrange,     // lambda - 4 Lambda psi0^2
  finite_difference,  // u''/u on the solver grid
};

class PekarTilt final : public RadialTilt {
 public:
  explicit PekarTilt(const PekarSolution& sol, LaplacianSource source = LaplacianSource::euler_lagrange);

  double drift(double r, bool* far_field = nullptr) const override { return sol_->drift_at(r, far_field); }
  double log_psi(double r) const override { return sol_->log_psi_at(r); }
  double laplacian_ratio(double r) const override;
  double stationary_cdf(double r) const override;
  double extent() const override { return sol_->grid().r_max(); }
  const PekarSolution& solution() const { return *sol_; }

 private:
  const PekarSolution* sol_;
  LaplacianSource source_;
  std::shared_ptr<const RadialFunction> fd_;
  std::shared_ptr<const RadialSampler> radial_;
};

/// psi = exp(-r^2 / (2 sigma^2)): b = -r / sigma^2, an Ornstein-Uhlenbeck drift
/// with stationary per-axis variance sigma^2 / 2.
class GaussianTilt final : public RadialTilt {
 public:
  explicit GaussianTilt(double sigma = 1.0);
  double drift(double r, bool* far_field = nullptr) const override;
  double log_psi(double r) const override;
  double laplacian_ratio(double r) const override;
  double stationary_cdf(double r) const override;
  double extent() const override { return 8.0 * sigma_; }
  double sigma() const { return sigma_; }

 private:
  double sigma_;
};

/// psi = 1: plain Brownian motion.
class FlatTilt final : public RadialTilt {
 public:
  double drift(double, bool* far_field = nullptr) const override {
    if (far_field) *far_field = false;
    return 0.0;
  }
  double log_psi(double) const override { return 0.0; }
  double laplacian_ratio(double) const override { return 0.0; }
  double stationary_cdf(double) const override;
  double extent() const override { return 10.0; }
};

/// Tilt tabulated on a radial grid: log psi and Delta psi / psi are
/// interpolated, b is the derivative of log psi. Lookups beyond the grid throw.
class TabulatedTilt final : public RadialTilt {
 public:
  TabulatedTilt(RadialFunction log_psi, RadialFunction laplacian_ratio);
  double drift(double r, bool* far_field = nullptr) const override;
  double log_psi(double r) const override { return interpolate(log_psi_, r); }
  double laplacian_ratio(double r) const override { return interpolate(laplacian_, r); }
  double stationary_cdf(double r) const override;
  double extent() const override { return log_psi_.grid().r_max(); }

 private:
  RadialFunction log_psi_;
  RadialFunction drift_;
  RadialFunction laplacian_;
  std::shared_ptr<const RadialSampler> radial_;
};

/// x' = x + b(|x|) (x / |x|) h + sqrt(h) xi. `far_field` counts extension use.
Vec3 em_step(const Vec3& x, const RadialTilt& tilt, double h, const Vec3& xi, bool* far_field = nullptr);
template <std::uniform_random_bit_generator Rng>
Vec3 em_step(const Vec3& x, const RadialTilt& tilt, double h, Rng& rng, bool* far_field = nullptr) {
  std::normal_distribution<double> g(0.0, 1.0);
  const Vec3 xi{g(rng), g(rng), g(rng)};
  return em_step(x, tilt, h, xi, far_field);
}

struct SdeConfig {
  double T = 1e4;
  double h = 1e-3;
  Vec3 x0;
  std::uint64_t seed = 0;
  std::size_t bins = 40;
  double hist_max = 0.0;           // 0: the tilt's extent
  std::size_t record_stride = 10;  // steps between histogram records
  std::size_t keep_every = 0;      // store every n-th recorded position (0: none)

  void validate() const;
};

nlohmann::json to_json(const SdeConfig& c);
SdeConfig sde_config_from_json(const nlohmann::json& j, SdeConfig base = {});

class SdeBlowUp : public std::runtime_error {
 public:
  SdeBlowUp(std::uint64_t step, double radius);
  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t step_;
};

struct Trajectory {
  Histogram radial;             // |X| at the initial point and every record_stride steps
  std::vector<Vec3> positions;  // optional thinned record
  Vec3 final_position;
  std::uint64_t steps = 0;
  std::uint64_t far_field_steps = 0;
};

/// Throws SdeBlowUp when |X| exceeds 10 times the histogram range.
Trajectory simulate(const SdeConfig& config, const RadialTilt& tilt);

/// Merges independent trajectories with seeds derived from config.seed, run
/// in parallel; the merge is order-independent.
Trajectory simulate_many(const SdeConfig& config, const RadialTilt& tilt, std::size_t count);

/// Reference bin probabilities of the stationary radial law on the histogram bins.
std::vector<double> stationary_reference(const Histogram& h, const RadialTilt& tilt);

/// EM path on [0, t] started at x0, as a DiscretePath.
DiscretePath sde_path(const RadialTilt& tilt, const Vec3& x0, double t, double h, std::uint64_t seed);

class PsiUnderflow : public std::domain_error {
 public:
  explicit PsiUnderflow(double r);
  double radius() const { return r_; }

 private:
  double r_;
};

/// log of (psi_x(W_0) / psi_x(W_t)) exp{1/2 int (Delta psi_x / psi_x)(W_s) ds},
/// psi_x = psi(. - center), left-point time integral.
double log_girsanov_weight(const DiscretePath& path, const RadialTilt& tilt, const Vec3& center = {});
double girsanov_weight(const DiscretePath& path, const RadialTilt& tilt, const Vec3& center = {});
/// Pekar tilt with the Euler-Lagrange Laplacian.
double girsanov_weight(const DiscretePath& path, const PekarSolution& sol, const Vec3& center = {});

struct PathwiseElCheck {
  double coulomb_term = 0.0;    // 2 t0 <L_t0, Lambda psi_x^2>
  double laplacian_term = 0.0;  // 1/2 int Delta psi_x / psi_x
  double rhs = 0.0;             // lambda t0 / 2
  double residual = 0.0;        // |lhs - rhs| / t0
};

/// 2 t0 <L_t0, Lambda psi_x^2> + 1/2 int (Delta psi_x / psi_x)(W_s) ds = lambda t0 / 2.
/// The occupation pairing uses segment midpoints, the time integral the left
/// point; Delta psi / psi comes from `source`.
PathwiseElCheck pathwise_el_check(const DiscretePath& path, const PekarSolution& sol, const Vec3& center = {},
                                  LaplacianSource source = LaplacianSource::finite_difference);

/// log of exp{int Lambda psi_x^2(W_s) ds}, left-point rule.
double log_feynman_kac_weight(const DiscretePath& path, const PekarSolution& sol, const Vec3& center = {});
double feynman_kac_weight(const DiscretePath& path, const PekarSolution& sol, const Vec3& center = {});

struct ImportanceCheck {
  double weighted_mean = 0.0;  // tilted paths, E[weight f(W_t)]
  double weighted_se = 0.0;
  double wiener_mean = 0.0;    // plain Wiener E[f(W_t)]
  double wiener_se = 0.0;
  double z = 0.0;
};

/// Cross-checks the Girsanov density: tilted-SDE paths reweighted by
/// girsanov_weight against plain Wiener paths, both started at the origin.
ImportanceCheck importance_check(const RadialTilt& tilt, double t, double h, std::size_t paths,
                                 const std::function<double(const Vec3&)>& f, std::uint64_t seed);

/// Header r_bin_center,count,reference_density.
void write_histogram_csv(std::ostream& os, const Histogram& h, std::span<const double> reference);

}  // namespace pekar
