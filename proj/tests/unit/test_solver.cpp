#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "pekar/pekar_solver.hpp"

using namespace pekar;

namespace {

const PekarSolution& solution() {
  static const PekarSolution sol = scf_iterate(ScfConfig{});
  return sol;
}

}  // namespace

TEST_CASE("newton potential of a thin shell") {
  const auto g = make_grid(10.0, 2000);
  const std::size_t k = 399;  // node at R = 2
  const double R = g.node(k);
  std::vector<double> v(g.size(), 0.0);
  v[k] = 1.0 / (4.0 * M_PI * R * R * g.dr());
  const auto phi = newton_potential(RadialFunction(g, v, Parity::even));
  const double smear = 2.0 * g.dr() / (R * R);
  for (double r : {0.5, 1.0, 1.9}) CHECK(std::abs(interpolate(phi, r) - 1.0 / R) <= smear);
  for (double r : {2.1, 4.0, 9.0}) CHECK(std::abs(interpolate(phi, r) - 1.0 / r) <= smear);
}

TEST_CASE("newton potential of a Gaussian") {
  const double s = 1.0;
  const auto g = make_grid(12.0, 3000);
  const double c = std::pow(2.0 * M_PI * s * s, -1.5);
  const auto rho = RadialFunction::from(g, [&](double r) { return c * std::exp(-r * r / (2 * s * s)); }, Parity::even);
  const auto phi = newton_potential(rho);
  CHECK(std::abs(phi.value_at_origin() - oracle::mean_inverse_radius(s)) <= 1e-4);
  CHECK(g.r_max() * phi[g.size() - 1] == doctest::Approx(1.0).epsilon(1e-6));

  std::vector<double> neg(g.size(), 0.0);
  neg[3] = -1.0;
  CHECK_THROWS_AS(newton_potential(RadialFunction(g, neg)), std::invalid_argument);
}

TEST_CASE("ground state closed forms") {
  SUBCASE("Coulomb potential 1/r") {
    const auto g = make_grid(60.0, 6000);
    const auto gs = ground_state(RadialFunction::from(g, [](double r) { return 1.0 / r; }));
    CHECK(std::abs(gs.eigenvalue - oracle::kHydrogenE0) <= 1e-3);
    // psi = u / r ∝ exp(-r/2)
    const double ratio = gs.psi[999] / gs.psi[1999];
    CHECK(ratio == doctest::Approx(std::exp(0.5 * (g.node(1999) - g.node(999)))).epsilon(1e-3));
  }
  SUBCASE("free particle in a box") {
    const double L = 30.0;
    const auto g = make_grid(L, 6000);
    const auto gs = ground_state(RadialFunction::from(g, [](double) { return 0.0; }));
    CHECK(std::abs(gs.eigenvalue - M_PI * M_PI / (L * L)) <= 1e-6);
  }
  SUBCASE("repulsive potentials are rejected") {
    const auto g = make_grid(10.0, 500);
    CHECK_THROWS_AS(ground_state(RadialFunction::from(g, [](double r) { return -r * r; })), std::invalid_argument);
  }
}

TEST_CASE("energy of Gaussian trials") {
  const auto g = make_grid(20.0, 4000);
  const auto e1 = energy(gaussian_psi(g, 1.0));
  CHECK(std::abs(e1.coulomb - oracle::gaussian_h(1.0)) <= 1e-4);
  CHECK(std::abs(e1.dirichlet - oracle::gaussian_i(1.0)) <= 1e-4);

  const double best = GaussianTrial::optimal_sigma();
  CHECK(best == doctest::Approx(3.0 * std::sqrt(M_PI) / (2.0 * std::sqrt(2.0))));
  CHECK(std::abs(energy(gaussian_psi(g, best)).value - oracle::kGaussianBestValue) <= 1e-4);
  CHECK(GaussianTrial::optimal_value() == doctest::Approx(oracle::kGaussianBestValue));

  CHECK_THROWS_AS(energy(RadialFunction::from(g, [](double r) { return std::exp(-r); })), std::invalid_argument);
}

TEST_CASE("converged Pekar solution") {
  const auto& sol = solution();
  CHECK(sol.rho >= oracle::kRhoLowerBound);
  CHECK(sol.rho >= oracle::kGaussianBestValue);
  CHECK(std::abs(sol.virial_gap()) <= 1e-3 * sol.rho);
  CHECK(std::abs(sol.lambda - 6.0 * sol.rho) <= 1e-2 * sol.rho);
  CHECK(std::abs(sol.lambda - (4.0 * sol.coulomb_energy - 2.0 * sol.dirichlet)) <= 1e-8);
  CHECK(sol.lambda >= 2.0 * sol.rho);
  CHECK(sol.residual <= 1e-3 * sol.lambda);
  CHECK(std::abs(energy(sol.psi0).value - sol.rho) <= 1e-10);
  CHECK(integrate_3d(RadialFunction::from(sol.grid(), [&](double r) { return sol.psi_at(r) * sol.psi_at(r); })) ==
        doctest::Approx(1.0).epsilon(1e-8));

  SUBCASE("frozen regression values") {
    CHECK(sol.rho == doctest::Approx(oracle::kRho).epsilon(1e-9));
    CHECK(sol.lambda == doctest::Approx(oracle::kLambda).epsilon(1e-9));
    CHECK(sol.coulomb_energy == doctest::Approx(oracle::kCoulomb).epsilon(1e-9));
    CHECK(sol.dirichlet == doctest::Approx(oracle::kDirichlet).epsilon(1e-9));
    CHECK(sol.rho == doctest::Approx(oracle::kRhoLiterature).epsilon(1e-4));
  }
  SUBCASE("history: unit mass and value settling") {
    for (const auto& rec : sol.history) CHECK(std::abs(rec.mass - 1.0) <= 1e-8);
    const auto& h = sol.history;
    REQUIRE(h.size() > 4);
    for (std::size_t i = h.size() - 3; i < h.size(); ++i) CHECK(h[i].value >= h[i - 1].value - 1e-9);
  }
  SUBCASE("EL residual from the direct Laplacian") {
    CHECK(el_residual(sol.psi0, sol.potential, sol.lambda) <= 1e-3 * sol.lambda);
  }
}

TEST_CASE("drift profile") {
  const auto g = make_grid(10.0, 1000);
  const auto d = drift_profile(gaussian_psi(g, 1.5)).drift;
  for (std::size_t i = 1; i + 1 < g.size(); i += 37) CHECK(std::abs(d[i] + g.node(i) / 2.25) <= 1e-9);

  const auto& sol = solution();
  for (std::size_t i = 0; i < sol.grid().size(); ++i) CHECK(sol.drift[i] <= 0.0);
  bool far = false;
  CHECK(sol.drift_at(25.0, &far) == doctest::Approx(-std::sqrt(sol.lambda)));
  CHECK(far);
  // log psi0 slope against the WKB rate well inside the grid
  const double slope = (sol.log_psi_at(12.0) - sol.log_psi_at(10.0)) / 2.0;
  CHECK(slope == doctest::Approx(-std::sqrt(sol.lambda)).epsilon(0.05));
  CHECK(sol.drift_at(0.5 * sol.grid().dr()) == 0.0);
}

TEST_CASE("grid refinement drift") {
  ScfConfig fine;
  fine.grid = make_grid(20.0, 4000);
  const double rho2 = scf_iterate(fine).rho;
  CHECK(std::abs(rho2 - solution().rho) / solution().rho <= 1e-4);
}

TEST_CASE("scf validation and failure") {
  ScfConfig bad;
  bad.mixing = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  ScfConfig short_run;
  short_run.max_iter = 2;
  CHECK_THROWS_AS(scf_iterate(short_run), ScfError);
}

TEST_CASE("self convolution preserves mass") {
  const auto& sol = solution();
  const auto conv = self_convolution(sol.psi0, 40.0, 2000);
  const double m1 = integrate_3d(sol.psi0);
  CHECK(std::abs(integrate_3d(conv) - m1 * m1) <= 1e-6 * m1 * m1);
}

TEST_CASE("solution round trip through json + csv") {
  const auto& sol = solution();
  std::stringstream csv;
  write_solution_csv(csv, sol);
  const auto back = load_solution(to_json(sol), csv);
  CHECK(back.rho == sol.rho);
  CHECK(back.lambda == sol.lambda);
  CHECK(back.psi0[123] == sol.psi0[123]);
  CHECK(back.potential_at(1.7) == doctest::Approx(sol.potential_at(1.7)).epsilon(1e-14));
}
