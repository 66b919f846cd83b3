#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "pekar/pekar_sde.hpp"
#include "pekar/stats.hpp"

using namespace pekar;

namespace {

const PekarSolution& solution() {
  static const PekarSolution sol = scf_iterate(ScfConfig{});
  return sol;
}

// psi = exp(-r^2/2) tabulated: log psi = -r^2/2, Delta psi / psi = r^2 - 3
TabulatedTilt tabulated_gaussian() {
  const auto g = make_grid(30.0, 6000);
  return TabulatedTilt(RadialFunction::from(g, [](double r) { return -0.5 * r * r; }, Parity::even),
                       RadialFunction::from(g, [](double r) { return r * r - 3.0; }, Parity::even));
}

}  // namespace

TEST_CASE("em_step") {
  const Vec3 x{0.7, -0.2, 1.1};
  CHECK(em_step(x, FlatTilt{}, 1e-3, Vec3{}) == x);

  const PekarTilt pekar(solution());
  const Vec3 y = em_step({2.0, 0.0, 0.0}, pekar, 1e-3, Vec3{});
  CHECK(y.x < 2.0);
  CHECK(y.y == 0.0);

  const GaussianTilt ou(1.0);
  const double h = 1e-3;
  const Vec3 z = em_step(x, ou, h, Vec3{});
  CHECK(norm(z - (1.0 - h) * x) <= 1e-12);

  std::mt19937_64 rng(1);
  Vec3 acc{};
  const int n = 20000;
  for (int i = 0; i < n; ++i) acc = acc + em_step(x, ou, 0.01, rng);
  const Vec3 m = (1.0 / n) * acc;
  CHECK(norm(m - 0.99 * x) <= 4.0 * std::sqrt(0.01 / n) * std::sqrt(3.0));

  bool far = false;
  em_step({40.0, 0.0, 0.0}, pekar, 1e-3, Vec3{}, &far);
  CHECK(far);
}

TEST_CASE("tilts agree with their closed forms") {
  const GaussianTilt g(1.3);
  CHECK(g.drift(2.0) == doctest::Approx(-2.0 / 1.69));
  CHECK(g.laplacian_ratio(1.0) == doctest::Approx(1.0 / (1.69 * 1.69) - 3.0 / 1.69));
  CHECK(g.stationary_cdf(100.0) == doctest::Approx(1.0));

  const auto tab = tabulated_gaussian();
  const GaussianTilt unit(1.0);
  for (double r : {0.01, 0.5, 2.0, 7.5}) {
    CHECK(tab.drift(r) == doctest::Approx(unit.drift(r)).epsilon(1e-6));
    CHECK(tab.laplacian_ratio(r) == doctest::Approx(unit.laplacian_ratio(r)).epsilon(1e-6));
  }
  CHECK(tab.stationary_cdf(1.0) == doctest::Approx(unit.stationary_cdf(1.0)).epsilon(1e-6));
  CHECK_THROWS(tab.log_psi(31.0));

  const PekarTilt ek(solution());
  const PekarTilt fd(solution(), LaplacianSource::finite_difference);
  for (double r : {0.3, 1.0, 3.0}) CHECK(ek.laplacian_ratio(r) == doctest::Approx(fd.laplacian_ratio(r)).epsilon(1e-6));
  CHECK(ek.stationary_cdf(20.0) == doctest::Approx(1.0));
  CHECK_THROWS(FlatTilt{}.stationary_cdf(1.0));
}

TEST_CASE("simulate") {
  SUBCASE("T = 0 records the initial point only") {
    SdeConfig c;
    c.T = 0.0;
    c.x0 = {1.0, 0.0, 0.0};
    c.bins = 10;
    c.hist_max = 5.0;
    const auto tr = simulate(c, GaussianTilt(1.0));
    CHECK(tr.radial.total == 1.0);
    CHECK(tr.radial.counts[2] == 1.0);
    CHECK(tr.steps == 0);
    CHECK(tr.final_position == c.x0);
  }
  SUBCASE("deterministic and mergeable") {
    SdeConfig c;
    c.T = 20.0;
    c.h = 1e-2;
    c.bins = 8;
    c.hist_max = 4.0;
    c.seed = 3;
    const auto a = simulate(c, GaussianTilt(1.0));
    const auto b = simulate(c, GaussianTilt(1.0));
    CHECK(a.radial.counts == b.radial.counts);
    const auto many = simulate_many(c, GaussianTilt(1.0), 4);
    CHECK(many.radial.total == doctest::Approx(4.0 * a.radial.total));
    CHECK(many.steps == 4 * a.steps);
  }
  SUBCASE("blow-up is reported") {
    SdeConfig c;
    c.T = 1.0;
    c.h = 0.5;
    c.x0 = {1.0, 0.0, 0.0};
    c.hist_max = 1.0;
    // h |b| > 2: the scheme overshoots and diverges
    CHECK_THROWS_AS(simulate(c, GaussianTilt(0.2)), SdeBlowUp);
  }
  SUBCASE("step size is checked against the Pekar decay rate") {
    SdeConfig c;
    c.T = 1.0;
    c.h = 0.1;
    CHECK_THROWS_AS(simulate(c, PekarTilt(solution())), std::invalid_argument);
  }
  SUBCASE("OU stationary law") {
    SdeConfig c;
    c.T = 2000.0;
    c.h = 1e-2;
    c.bins = 16;
    c.hist_max = 4.0;
    c.seed = 11;
    const GaussianTilt ou(1.0);
    const auto tr = simulate(c, ou);
    CHECK(l1_distance(tr.radial, stationary_reference(tr.radial, ou)) <= 0.06);
  }
}

TEST_CASE("b = 0 endpoints follow the Wiener law") {
  const std::size_t n = 10000;
  std::vector<double> sde_x, bm_x;
  for (std::size_t i = 0; i < n; ++i) {
    sde_x.push_back(sde_path(FlatTilt{}, {}, 1.0, 0.05, derive_seed(1, i)).endpoint().x);
    bm_x.push_back(sample_wiener(1.0, 0.05, derive_seed(2, i)).endpoint().x);
  }
  CHECK(ks_statistic(sde_x, bm_x) <= 1.95 * std::sqrt(2.0 / n));
}

TEST_CASE("Girsanov weight") {
  const auto w = sample_wiener(1.0, 1e-2, 5);
  CHECK(girsanov_weight(w, FlatTilt{}) == 1.0);

  SUBCASE("Gaussian tilt against the closed form") {
    const auto tab = tabulated_gaussian();
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      auto p = sample_wiener(2.0, 1e-2, seed).translated({0.3, 0.1, -0.2});
      double expo = 0.5 * (norm2(p.endpoint()) - norm2(p.positions.front()));
      for (std::size_t k = 0; k + 1 < p.positions.size(); ++k) expo += 0.5 * p.h * (norm2(p.positions[k]) - 3.0);
      CHECK(log_girsanov_weight(p, tab) == doctest::Approx(expo).epsilon(1e-6));
      CHECK(log_girsanov_weight(p, GaussianTilt(1.0)) == doctest::Approx(expo).epsilon(1e-12));
    }
  }
  SUBCASE("weights compose along concatenated paths and are reciprocal") {
    const PekarTilt tilt(solution());
    const auto p = sample_wiener(2.0, 1e-2, 8);
    DiscretePath head, tail;
    head.h = tail.h = p.h;
    head.positions.assign(p.positions.begin(), p.positions.begin() + 101);
    tail.positions.assign(p.positions.begin() + 100, p.positions.end());
    tail.origin_start = false;
    const Vec3 c{0.2, 0.0, 0.1};
    CHECK(log_girsanov_weight(p, tilt, c) ==
          doctest::Approx(log_girsanov_weight(head, tilt, c) + log_girsanov_weight(tail, tilt, c)).epsilon(1e-12));
    CHECK(girsanov_weight(p, tilt, c) * std::exp(-log_girsanov_weight(p, tilt, c)) == doctest::Approx(1.0));
  }
  SUBCASE("underflow of psi is an error") {
    DiscretePath far;
    far.h = 0.1;
    far.positions = {{0, 0, 0}, {1000.0, 0, 0}};
    CHECK_THROWS_AS(log_girsanov_weight(far, PekarTilt(solution())), PsiUnderflow);
  }
}

TEST_CASE("Feynman-Kac weight") {
  const auto& sol = solution();
  DiscretePath still;
  still.h = 0.01;
  still.positions.assign(101, Vec3{});
  CHECK(feynman_kac_weight(still, sol) == doctest::Approx(std::exp(sol.potential_at(0.0))).epsilon(1e-12));

  const double R = 50.0;
  still.positions.assign(101, Vec3{R, 0, 0});
  CHECK(std::abs(log_feynman_kac_weight(still, sol) - 1.0 / R) <= 1.0 / (R * R));

  SUBCASE("ratio against the Girsanov ratio") {
    // log G_x = log psi(W_0 - x) - log psi(W_t - x) + lambda t / 2 - 2 log FK_x
    const auto p = sample_wiener(1.0, 1e-3, 21);
    const Vec3 x{0.4, -0.3, 0.2}, y{-0.5, 0.1, 0.0};
    auto boundary = [&](const Vec3& c) {
      return sol.log_psi_at(norm(p.positions.front() - c)) - sol.log_psi_at(norm(p.endpoint() - c));
    };
    const double lg = girsanov_weight(p, sol, x) / girsanov_weight(p, sol, y);
    const double fk = feynman_kac_weight(p, sol, x) / feynman_kac_weight(p, sol, y);
    const double predicted = std::exp(boundary(x) - boundary(y)) / (fk * fk);
    CHECK(lg == doctest::Approx(predicted).epsilon(1e-6));
    const double lx = std::log(girsanov_weight(p, sol, x));
    CHECK(lx == doctest::Approx(boundary(x) + 0.5 * sol.lambda * p.horizon() - 2.0 * log_feynman_kac_weight(p, sol, x))
                    .epsilon(1e-9));
  }
}

TEST_CASE("pathwise Euler-Lagrange check") {
  const auto& sol = solution();
  SUBCASE("constant path reduces to the pointwise equation") {
    const PekarTilt fd(sol, LaplacianSource::finite_difference);
    for (double r : {0.5, 1.3, 3.0}) {
      DiscretePath still;
      still.h = 1e-2;
      still.origin_start = false;
      still.positions.assign(201, Vec3{r, 0, 0});
      const auto c = pathwise_el_check(still, sol);
      const double pointwise = fd.laplacian_ratio(r) + 4.0 * sol.potential_at(r) - sol.lambda;
      CHECK(c.residual == doctest::Approx(0.5 * std::abs(pointwise)).epsilon(1e-6));
    }
  }
  SUBCASE("Wiener paths: small residual, first order in h") {
    std::vector<double> coarse, fine;
    for (std::uint64_t s = 0; s < 10; ++s) {
      const auto p = sample_wiener(2.0, 1e-3, derive_seed(4, s));
      const auto c = pathwise_el_check(p, sol);
      CHECK(c.residual <= 5e-3 * sol.lambda);
      CHECK(c.rhs == doctest::Approx(sol.lambda * 2.0 / 2.0));
      coarse.push_back(c.residual);
      fine.push_back(pathwise_el_check(refine_path(p, derive_seed(5, s)), sol).residual);
    }
    const double ratio = mean(fine) / mean(coarse);
    CHECK(ratio >= 0.375);
    CHECK(ratio <= 0.625);
  }
}

TEST_CASE("importance sampling cross-check") {
  const GaussianTilt ou(1.0);
  const auto r = importance_check(
      ou, 1.0, 1e-2, 2000, [](const Vec3& x) { return std::exp(-norm2(x - Vec3{0.5, 0, 0}) / 2.0); }, 3);
  CHECK(std::abs(r.z) <= 3.0);
  CHECK(r.weighted_se > 0.0);
}

TEST_CASE("histogram csv") {
  Histogram h(0.0, 2.0, 2);
  h.add(0.5);
  h.add(1.5);
  h.add(1.7);
  std::ostringstream os;
  write_histogram_csv(os, h, std::vector<double>{0.25, 0.75});
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "r_bin_center,count,reference_density");
  std::getline(is, line);
  CHECK(line.rfind("0.5,1,0.25", 0) == 0);
}

TEST_CASE("sde config json") {
  SdeConfig c;
  c.T = 12.0;
  c.seed = 99;
  c.x0 = {1, 2, 3};
  const auto back = sde_config_from_json(to_json(c));
  CHECK(back.T == 12.0);
  CHECK(back.seed == 99);
  CHECK(back.x0 == c.x0);
  SdeConfig bad;
  bad.h = -1.0;
  CHECK_THROWS(bad.validate());
}
