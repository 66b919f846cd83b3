#include <doctest.h>

#include <cmath>
#include <sstream>

#include "pekar/radial.hpp"

using namespace pekar;

TEST_CASE("make_grid spacing and nodes") {
  CHECK_THROWS_AS(make_grid(10.0, 10), std::invalid_argument);
  CHECK_THROWS_AS(make_grid(-1.0, 100), std::invalid_argument);
  CHECK(make_grid(10.0, 1000).dr() == doctest::Approx(0.01).epsilon(1e-15));

  const auto g = make_grid(1.0, 16);
  CHECK(g.node(0) == 0.0625);
  CHECK(g.node(15) == 1.0);
  CHECK(std::abs(make_grid(20.0, 2000).node(1999) - 20.0) <= 1e-12);
}

TEST_CASE("integrate_radial on closed forms") {
  const auto g = make_grid(1.0, 1000);
  const auto one = RadialFunction::from(g, [](double) { return 1.0; }, Parity::even);
  CHECK(std::abs(integrate_radial(one, 0) - 1.0) <= 1e-10);

  const auto r = RadialFunction::from(g, [](double x) { return x; }, Parity::odd);
  CHECK(std::abs(integrate_radial(r, 1) - 1.0 / 3.0) <= 1e-8);

  const auto e = RadialFunction::from(make_grid(40.0, 4000), [](double x) { return std::exp(-x); });
  CHECK(std::abs(integrate_radial(e, 2) - 2.0) <= 1e-6);

  SUBCASE("quadratics are exact") {
    const auto q = RadialFunction::from(g, [](double x) { return 3.0 * x * x - x + 0.5; });
    CHECK(integrate_radial(q, 0) == doctest::Approx(1.0 - 0.5 + 0.5).epsilon(1e-10));
  }
  SUBCASE("3D integral carries 4 pi r^2") {
    const auto gauss = RadialFunction::from(make_grid(12.0, 2400), [](double x) { return std::exp(-x * x); },
                                            Parity::even);
    CHECK(integrate_3d(gauss) == doctest::Approx(std::pow(M_PI, 1.5)).epsilon(1e-8));
  }
}

TEST_CASE("radial_derivative") {
  const auto g = make_grid(2.0, 400);
  const auto sq = RadialFunction::from(g, [](double x) { return x * x; });
  const auto d = radial_derivative(sq);
  for (std::size_t i = 1; i + 1 < g.size(); ++i) CHECK(std::abs(d[i] - 2.0 * g.node(i)) <= 1e-10);

  const auto c = radial_derivative(RadialFunction::from(g, [](double) { return 3.5; }));
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(c[i]) <= 1e-12);

  const auto s = radial_derivative(RadialFunction::from(g, [](double x) { return std::sin(x); }));
  const double h2 = g.dr() * g.dr();
  for (std::size_t i = 1; i + 1 < g.size(); ++i) CHECK(std::abs(s[i] - std::cos(g.node(i))) <= h2 / 6.0 + 1e-14);
  // one-sided ends are second order as well
  CHECK(std::abs(s[g.size() - 1] - std::cos(2.0)) <= h2);

  SUBCASE("fundamental theorem to O(dr^2)") {
    const auto f = RadialFunction::from(g, [](double x) { return std::exp(-x) * x; });
    const double lhs = integrate_radial(radial_derivative(f), 0);
    // f(0) = 0
    CHECK(std::abs(lhs - f[g.size() - 1]) <= 10.0 * h2);
  }
}

TEST_CASE("interpolate") {
  const auto g = make_grid(5.0, 500);
  const auto e = RadialFunction::from(g, [](double x) { return std::exp(-x); });
  for (std::size_t k : {0u, 7u, 250u, 499u}) CHECK(interpolate(e, g.node(k)) == e[k]);

  const auto lin = RadialFunction::from(g, [](double x) { return x; }, Parity::odd);
  const double mid = 0.5 * (g.node(3) + g.node(4));
  CHECK(std::abs(interpolate(lin, mid) - mid) <= 1e-12);

  const double h3 = g.dr() * g.dr() * g.dr();
  for (double r : {0.123, 1.0 / 3.0, 2.71828, 4.9991}) CHECK(std::abs(interpolate(e, r) - std::exp(-r)) <= h3);

  CHECK_THROWS_AS(interpolate(e, 5.1), ExtrapolationError);
  CHECK_THROWS_AS(interpolate(e, -0.1), ExtrapolationError);

  SUBCASE("even functions are flat at the origin") {
    const auto gauss = RadialFunction::from(g, [](double x) { return std::exp(-x * x); }, Parity::even);
    CHECK(interpolate(gauss, 0.0) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(gauss.value_at_origin() == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("csv output has a header and one row per node") {
  const auto g = make_grid(1.0, 16);
  std::ostringstream os;
  write_csv(os, RadialFunction::from(g, [](double x) { return x; }), "psi");
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "r,psi");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 16);
}

TEST_CASE("RadialSampler inverts the CDF") {
  // 4 pi r^2 e^{-r^2}: chi law with 3 degrees of freedom scaled by 1/sqrt 2
  const auto g = make_grid(8.0, 4000);
  const auto dens = RadialFunction::from(g, [](double x) { return 4.0 * M_PI * x * x * std::exp(-x * x); },
                                         Parity::even);
  const RadialSampler s(dens);
  CHECK(s.total_mass() == doctest::Approx(std::pow(M_PI, 1.5)).epsilon(1e-6));
  CHECK(s.cdf(0.0) == 0.0);
  CHECK(s.cdf(8.0) == doctest::Approx(1.0));
  for (double u : {0.1, 0.5, 0.9}) CHECK(s.cdf(s.quantile(u)) == doctest::Approx(u).epsilon(1e-6));
  const double x = 1.0;
  const double exact = std::erf(x) - 2.0 / std::sqrt(M_PI) * x * std::exp(-x * x);
  CHECK(s.cdf(x) == doctest::Approx(exact).epsilon(1e-5));

  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) CHECK(norm(RadialSampler::uniform_direction(rng)) == doctest::Approx(1.0));
}
