#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "pekar/gibbs_sampler.hpp"
#include "pekar/stats.hpp"

using namespace pekar;

namespace {

ChainConfig small_chain(double t, std::size_t m, double beta) {
  ChainConfig c;
  c.t = t;
  c.h = t / static_cast<double>(m);
  c.beta = beta;
  c.burn_in = 2000;
  c.draws = 400;
  c.thinning = 10;
  c.record_shift = false;
  return c;
}

}  // namespace

TEST_CASE("kernel_sum matches the direct sum") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  std::vector<Vec3> pts(37);
  for (auto& p : pts) p = {g(rng), g(rng), g(rng)};
  const PointColumns cols(pts);
  const Vec3 q{0.3, -0.2, 0.1};
  const double eta = 0.05;
  double direct = 0.0;
  for (std::size_t i = 5; i < 33; ++i) direct += 1.0 / std::sqrt(norm2(q - pts[i]) + eta * eta);
  CHECK(kernel_sum(cols, 5, 33, q, eta * eta) == doctest::Approx(direct).epsilon(1e-14));
  CHECK(kernel_sum(cols, 4, 4, q, eta * eta) == 0.0);
}

TEST_CASE("chain state cache") {
  CHECK_THROWS_AS(ChainState(sample_wiener(1.0, 0.25, 1), 1.0, 0.0), std::invalid_argument);

  const auto c = small_chain(4.0, 128, 1.0);
  ChainState s(sample_wiener(c.t, c.h, 5), 1.0, c.softening());
  CHECK(s.hamiltonian() == doctest::Approx(hamiltonian(occupation_of(s.path(), c.softening()))).epsilon(1e-13));
  std::mt19937_64 rng(6);
  for (int k = 0; k < 3000; ++k) mh_step(s, c, rng);
  CHECK(std::abs(s.hamiltonian() - s.recompute()) <= 1e-10);
  CHECK(s.checkpoints() >= 2);
  CHECK(s.max_checkpoint_deviation() <= 1e-8);
  CHECK(s.checkpoint() <= 1e-8);

  ChainState other(sample_wiener(c.t, c.h, 7), 0.5, c.softening());
  const double h1 = s.hamiltonian(), h2 = other.hamiltonian();
  s.swap_configuration(other);
  CHECK(s.hamiltonian() == h2);
  CHECK(other.hamiltonian() == h1);
  CHECK(s.beta() == 1.0);
}

TEST_CASE("Metropolis rule") {
  const auto c = small_chain(2.0, 64, 0.0);
  SUBCASE("beta = 0 accepts every proposal") {
    ChainState s(sample_wiener(c.t, c.h, 1), 0.0, c.softening());
    std::mt19937_64 rng(2);
    for (int k = 0; k < 2000; ++k) CHECK(mh_step(s, c, rng));
    for (std::size_t m = 0; m < kMoveTypes; ++m) CHECK(s.stats().accepted[m] == s.stats().proposed[m]);
  }
  SUBCASE("uphill moves have log acceptance >= 0") {
    ChainState s(sample_wiener(c.t, c.h, 3), 1.0, c.softening());
    std::mt19937_64 rng(4);
    int uphill = 0;
    for (int k = 0; k < 200; ++k) {
      auto p = s.propose(MoveType::bridge, c.moves, rng);
      s.evaluate(p);
      if (p.delta_h > 0) {
        ++uphill;
        CHECK(s.log_acceptance(p) > 0.0);
        CHECK(s.log_acceptance(p) == doctest::Approx(c.t * p.delta_h));
      }
    }
    CHECK(uphill > 0);
  }
}

TEST_CASE("numerical detailed balance") {
  for (bool pinned : {true, false}) {
    auto path = sample_wiener(4.0, 4.0 / 128.0, pinned ? 8 : 9);
    path.origin_start = pinned;
    ChainState s(std::move(path), 1.0, default_softening(4.0 / 128.0));
    MoveMix mix;
    std::mt19937_64 rng(10);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      for (std::size_t m = 0; m < kMoveTypes; ++m) {
        const auto type = static_cast<MoveType>(m);
        if (pinned && type == MoveType::translate) continue;
        auto p = s.propose(type, mix, rng);
        s.evaluate(p);
        worst = std::max(worst, std::abs(std::expm1(detailed_balance_defect(s, p, mix))));
      }
    }
    CHECK(worst <= 1e-12);
  }
}

TEST_CASE("evaluated delta matches a full recomputation") {
  auto path = sample_wiener(4.0, 4.0 / 128.0, 12);
  path.origin_start = false;
  const double eta = default_softening(path.h);
  ChainState s(path, 1.0, eta);
  std::mt19937_64 rng(13);
  for (std::size_t m = 0; m < kMoveTypes; ++m) {
    auto p = s.propose(static_cast<MoveType>(m), MoveMix{}, rng);
    s.evaluate(p);
    const double before = s.hamiltonian();
    s.apply(std::move(p));
    CHECK(s.hamiltonian() == doctest::Approx(hamiltonian(occupation_of(s.path(), eta))).epsilon(1e-12));
    if (static_cast<MoveType>(m) == MoveType::translate) {
      CHECK(s.hamiltonian() == doctest::Approx(before).epsilon(1e-12));
    } else {
      CHECK(s.hamiltonian() != before);
    }
  }
}

TEST_CASE("Wiener mean of H") {
  const double h4 = wiener_mean_hamiltonian(4.0, 4.0 / 128.0, default_softening(4.0 / 128.0));
  CHECK(std::abs(h4 - oracle::kWienerH4) <= 3.0 * oracle::kWienerH4Se);
  const double h16 = wiener_mean_hamiltonian(16.0, 16.0 / 128.0, default_softening(16.0 / 128.0));
  CHECK(std::abs(h16 - oracle::kWienerH16) <= 3.0 * oracle::kWienerH16Se);
  CHECK(wiener_mean_hamiltonian_continuum(4.0) == doctest::Approx(std::sqrt(2.0 / M_PI) * (8.0 / 3.0) / 2.0));

  SUBCASE("beta = 0 chain against the closed form") {
    auto c = small_chain(2.0, 64, 0.0);
    c.draws = 2000;
    const auto out = run_chain(c, nullptr, 31);
    const auto hs = out.hamiltonians();
    CHECK(std::abs(mean(hs) - wiener_mean_hamiltonian(c.t, c.h, c.softening())) <= 3.0 * mcmc_standard_error(hs));
  }
}

TEST_CASE("run_chain determinism and output") {
  const auto c = small_chain(2.0, 32, 1.0);
  const auto a = run_chain(c, nullptr, 77);
  const auto b = run_chain(c, nullptr, 77);
  REQUIRE(a.samples.size() == c.draws);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].hamiltonian == b.samples[i].hamiltonian);
    CHECK(a.samples[i].endpoint == b.samples[i].endpoint);
    CHECK(a.samples[i].step == c.burn_in + (i + 1) * c.thinning);
  }
  CHECK(to_json(a).dump() == to_json(b).dump());
  CHECK(run_chain(c, nullptr, 78).samples[0].hamiltonian != a.samples[0].hamiltonian);

  std::ostringstream os;
  write_samples_csv(os, a);
  CHECK(os.str().rfind("step,H,Yx,Yy,Yz,Wx,Wy,Wz,orbit_dist\n", 0) == 0);

  ChainConfig shift = c;
  shift.record_shift = true;
  CHECK_THROWS_AS(run_chain(shift, nullptr, 1), std::invalid_argument);
}

TEST_CASE("chain config json round trip") {
  ChainConfig c = small_chain(4.0, 64, 0.5);
  c.moves.bridge = 0.6;
  const auto back = chain_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK_THROWS(chain_config_from_json({{"t", 1.0}, {"h", 0.3}}).validate());
}

TEST_CASE("beta ladder and thermodynamic integration") {
  const auto grid = default_beta_grid();
  REQUIRE(grid.size() == 11);
  CHECK(grid.front() == 0.0);
  CHECK(grid.back() == 1.0);
  CHECK(grid[1] == doctest::Approx(0.19));
  CHECK(grid[10] - grid[9] < grid[1] - grid[0]);

  LadderConfig bad;
  bad.betas = {0.0, 0.6, 0.5, 1.0};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.betas = {0.0, 0.5, 0.9};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  SUBCASE("trapezoid rule") {
    const auto fe = integrate_ladder(4.0, {0.0, 0.5, 1.0}, {1.0, 2.0, 3.0}, {0.1, 0.1, 0.1});
    CHECK(fe.estimate == doctest::Approx(2.0));
    CHECK(fe.standard_error == doctest::Approx(std::sqrt(0.25 * 0.25 + 0.5 * 0.5 + 0.25 * 0.25) * 0.1));
    CHECK(fe.monotone);
    CHECK_FALSE(integrate_ladder(4.0, {0.0, 0.5, 1.0}, {3.0, 2.0, 1.0}, {0.1, 0.1, 0.1}).monotone);
    const auto single = integrate_ladder(4.0, {0.0}, {1.7}, {0.2});
    CHECK(single.estimate == 1.7);
  }
  SUBCASE("single beta = 0 ladder equals the Wiener mean") {
    LadderConfig l;
    l.chain = small_chain(2.0, 32, 0.0);
    l.betas = {0.0};
    const auto fe = free_energy_ti(l, 5);
    CHECK(fe.estimate == doctest::Approx(fe.mean_h[0]));
    const double exact = wiener_mean_hamiltonian(2.0, 2.0 / 32.0, l.chain.softening());
    CHECK(std::abs(fe.estimate - exact) <= 4.0 * fe.standard_error);
  }
  SUBCASE("ladder runs are deterministic and exchange configurations") {
    LadderConfig l;
    l.chain = small_chain(2.0, 32, 0.0);
    l.chain.draws = 100;
    l.betas = {0.0, 0.5, 1.0};
    l.swap_interval = 20;
    const auto a = run_ladder(l, nullptr, 9);
    const auto b = run_ladder(l, nullptr, 9);
    REQUIRE(a.chains.size() == 3);
    CHECK(a.swap_rates.size() == 2);
    CHECK(a.overlap.size() == 2);
    for (double r : a.swap_rates) CHECK(r > 0.0);
    for (std::size_t k = 0; k < 3; ++k)
      CHECK(a.chains[k].hamiltonians() == b.chains[k].hamiltonians());
    const auto fe = free_energy_ti(l, 9);
    CHECK(fe.estimate > 0.0);
    CHECK(fe.monotone);
  }
}

TEST_CASE("refinement study") {
  const auto r = refinement_study(sample_wiener(4.0, 4.0 / 64.0, 3), 0.1, 4);
  CHECK(r.coarse > 0.0);
  CHECK(r.fine > 0.0);
  CHECK(std::abs(r.fine - r.coarse) / r.coarse < 0.1);
}
