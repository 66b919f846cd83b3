#pragma once

// Radial self-consistent solver for the Pekar variational problem
//
//   rho = sup_{||psi||_2 = 1} { H(psi^2) - I(psi^2) },
//   H(psi^2) = int int psi^2(x) psi^2(y) / |x - y|,   I = 1/2 ||grad psi||^2,
//
// whose maximizer satisfies (Delta + 4 Lambda psi^2) psi = lambda psi with
// Lambda the Newton potential. Everything lives in the l = 0 sector on a
// RadialGrid; all 3D integrals carry the explicit 4 pi r^2 Jacobian.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pekar/radial.hpp"

namespace pekar {

/// psi_sigma(r) = (pi sigma^2)^{-3/4} exp(-r^2 / (2 sigma^2)), normalized in
/// R^3. Its density psi^2 is Gaussian with per-axis variance sigma^2 / 2 and
/// its log-derivative is -r / sigma^2.
RadialFunction gaussian_psi(const RadialGrid& grid, double sigma);

/// Closed forms for the Gaussian trial family above.
struct GaussianTrial {
  static double coulomb_energy(double sigma);  // sqrt(2/pi) / sigma
  static double dirichlet(double sigma);       // 3 / (4 sigma^2)
  static double value(double sigma) { return coulomb_energy(sigma) - dirichlet(sigma); }
  static double optimal_sigma();               // 3 sqrt(pi) / (2 sqrt 2)
  static double optimal_value();               // 2 / (3 pi)
};

/// Lambda rho(r) = (4 pi / r) int_0^r s^2 rho + 4 pi int_r^inf s rho, by
/// cumulative trapezoid with Euler-Maclaurin end corrections. Throws
/// std::invalid_argument on negative density values.
RadialFunction newton_potential(const RadialFunction& density);

struct GroundState {
  double eigenvalue = 0.0;  // minimal eigenvalue e0 of -u'' - V u
  RadialFunction psi;       // u / r, 4 pi int r^2 psi^2 = 1, positive
  std::size_t inverse_iterations = 0;
};

class EigenSolverError : public std::runtime_error {
 public:
  EigenSolverError(const std::string& what, std::size_t iterations, double last_change)
      : std::runtime_error(what), iterations_(iterations), last_change_(last_change) {}
  std::size_t iterations() const { return iterations_; }
  double last_change() const { return last_change_; }

 private:
  std::size_t iterations_;
  double last_change_;
};

/// Ground state of -u'' - V(r) u = e u with u(0) = u(r_max) = 0 for a
/// nonnegative (attractive) potential V. The tridiagonal second-difference
/// discretization is used; e0 comes from Sturm-sequence bisection and the
/// eigenvector from shifted inverse iteration.
GroundState ground_state(const RadialFunction& potential);

struct Energy {
  double coulomb = 0.0;    // H
  double dirichlet = 0.0;  // I
  double value = 0.0;      // H - I
};

/// H = 4 pi int r^2 psi^2 Lambda psi^2, I = 1/2 4 pi int (u')^2 with u = r psi.
/// The discrete forms match the eigen-solver exactly, so for a self-consistent
/// psi the Rayleigh quotient equals 4H - 2I. Rejects psi whose 3D norm differs
/// from 1 by more than 1e-6.
Energy energy(const RadialFunction& psi);

struct ScfConfig {
  RadialGrid grid = RadialGrid(20.0, 2000);
  double mixing = 0.5;
  double tol = 1e-10;
  std::size_t max_iter = 2000;

  void validate() const;
};

struct ScfIterationRecord {
  double density_change = 0.0;  // sup over nodes |psi_new^2 - rho_k|
  double value = 0.0;           // H - I of psi_new
  double mass = 0.0;            // 3D mass of the mixed iterate
};

class ScfError : public std::runtime_error {
 public:
  ScfError(const std::string& what, RadialFunction last_density, std::vector<ScfIterationRecord> history)
      : std::runtime_error(what), last_density_(std::move(last_density)), history_(std::move(history)) {}
  const RadialFunction& last_density() const { return last_density_; }
  const std::vector<ScfIterationRecord>& history() const { return history_; }

 private:
  RadialFunction last_density_;
  std::vector<ScfIterationRecord> history_;
};

struct PekarSolution {
  RadialFunction psi0;       // L2-normalized, positive, decreasing
  double lambda = 0.0;       // Euler-Lagrange eigenvalue, lambda = 4H - 2I
  double rho = 0.0;          // H - I
  double coulomb_energy = 0.0;
  double dirichlet = 0.0;
  RadialFunction potential;  // Lambda psi0^2
  RadialFunction drift;      // psi0' / psi0
  double residual = 0.0;     // sup |Delta psi0/psi0 + 4 Lambda psi0^2 - lambda| where psi0 > 1e-6 psi0(0)
  double eigenvalue_gap = 0.0;  // |lambda + e0| of the last linear solve
  std::size_t iterations = 0;
  std::size_t drift_clamped_nodes = 0;
  std::vector<ScfIterationRecord> history;

  const RadialGrid& grid() const { return psi0.grid(); }
  double virial_gap() const { return coulomb_energy - 2.0 * dirichlet; }
  double decay_rate() const;  // sqrt(lambda)
  /// Radius beyond which psi0 and its drift are replaced by the WKB tail,
  /// keeping lookups away from the Dirichlet wall at r_max.
  double tail_radius() const;

  /// Lambda psi0^2 at any radius (mass / r beyond the grid).
  double potential_at(double r) const;
  /// log psi0 at any radius, WKB-extended beyond tail_radius().
  double log_psi_at(double r) const;
  double psi_at(double r) const;
  /// Drift profile b(r); 0 inside the first cell, -sqrt(lambda) beyond
  /// tail_radius(). `far_field` is set when the extension was used.
  double drift_at(double r, bool* far_field = nullptr) const;
  /// Delta psi0 / psi0 via the Euler-Lagrange substitution lambda - 4 Lambda psi0^2.
  double laplacian_ratio_at(double r) const { return lambda - 4.0 * potential_at(r); }
};

/// Self-consistent iteration rho_{k+1} = (1 - a) rho_k + a psi_new^2 with
/// psi_new the ground state of -Delta - 4 Lambda rho_k. Starts from the optimal
/// Gaussian trial when `init` is empty. Throws ScfError after max_iter.
PekarSolution scf_iterate(const ScfConfig& config, const std::optional<RadialFunction>& init = std::nullopt);

struct DriftProfile {
  RadialFunction drift;
  std::size_t clamped_nodes = 0;  // nodes where psi < 1e-300
};

/// b(r) = psi'(r) / psi(r), the radial profile of grad psi / psi.
DriftProfile drift_profile(const RadialFunction& psi);
DriftProfile drift_profile(const PekarSolution& sol);

/// Delta psi / psi = u'' / u from second differences of u = r psi. This is the
/// direct route, independent of the Euler-Lagrange substitution.
RadialFunction laplacian_ratio_fd(const RadialFunction& psi);

/// sup |u''/u + V - lambda| over nodes where psi > cutoff * psi(0).
double el_residual(const RadialFunction& psi, const RadialFunction& coulomb_potential, double lambda,
                   double cutoff = 1e-6);

/// Radial density of the 3D convolution (psi0 * psi0)(r) on [0, r_out]
/// sampled at n_out nodes, and its 3D integral.
RadialFunction self_convolution(const RadialFunction& f, double r_out, std::size_t n_out);

nlohmann::json to_json(const PekarSolution& sol);
void write_solution_csv(std::ostream& os, const PekarSolution& sol);
/// Rebuilds a solution from the JSON summary and the CSV profile table.
PekarSolution load_solution(const nlohmann::json& summary, std::istream& csv);

}  // namespace pekar
