#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "pekar/experiments.hpp"

using namespace pekar;
using nlohmann::json;

namespace {

const PekarSolution& solution() {
  static const PekarSolution sol = scf_iterate(ScfConfig{});
  return sol;
}

json tiny_config() {
  return json::parse(R"({
    "seed": 7,
    "solver": {"r_max": 16.0, "n": 400, "tol": 1e-9},
    "coulomb": {"shell_points": 200, "gaussian_points": 400, "gaussian_batches": 4, "oracle_points": 16,
                "split_steps": 32},
    "sampler": {"chain": {"burn_in": 200, "draws": 20, "thinning": 5, "checkpoint_interval": 100},
                "t_grid": [1.0, 2.0], "steps": 16},
    "soundness": {"t": 1.0, "steps": 8, "burn_in": 100, "draws": 20, "thinning": 2, "balance_trials": 5},
    "free_energy": {"t_grid": [1.0, 2.0], "h": 0.25, "betas": [0.0, 0.5, 1.0], "swap_interval": 10,
                    "burn_in": 100, "draws": 10, "thinning": 2},
    "sde": {"T": 2.0, "h": 1e-3, "start_paths": 4, "start_horizon": 0.05},
    "identities": {"t": 0.5, "h": 1e-2, "paths": 20, "t0": 0.5, "pathwise_h": 1e-2, "pathwise_seeds": 2},
    "verify": {"bootstrap": 10, "synthetic_samples": 500, "direct_points": 200}
  })");
}

LawRow row(double t, double beta, double l1, double se) {
  LawRow r;
  r.t = t;
  r.beta = beta;
  r.l1 = l1;
  r.l1_se = se;
  r.samples = 2000;
  r.ess = 1000;
  return r;
}

FreeEnergyEstimate estimate(double t, double value, double se) {
  FreeEnergyEstimate e;
  e.t = t;
  e.estimate = value;
  e.standard_error = se;
  return e;
}

bool check_passed(const CriterionResult& r, const std::string& name) {
  return r.detail.at("checks").at(name).at("pass").get<bool>();
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(default_config().validate());
  CHECK_NOTHROW(parse_config(tiny_config()).validate());

  auto j = tiny_config();
  j["free_energy"]["betas"] = {0.0, 0.5, 0.9};
  CHECK_THROWS_AS(parse_config(j).validate(), ConfigError);

  j = tiny_config();
  j["bogus"] = 1;
  CHECK_THROWS_AS(parse_config(j), ConfigError);

  j = tiny_config();
  j["schema_version"] = 99;
  CHECK_THROWS_AS(parse_config(j).validate(), ConfigError);

  j = tiny_config();
  j["sampler"]["t_grid"] = {2.0, 1.0};
  CHECK_THROWS_AS(parse_config(j).validate(), ConfigError);

  j = tiny_config();
  j["solver"]["n"] = "many";
  CHECK_THROWS_AS(parse_config(j), ConfigError);

  CHECK_THROWS_AS(parse_config(json::array()), ConfigError);
}

TEST_CASE("config json round trip") {
  const auto c = parse_config(tiny_config());
  const auto j = to_json(c);
  CHECK(to_json(parse_config(j)) == j);
  CHECK(c.seed == 7);
  CHECK(c.sampler.chain.burn_in == 200);
  CHECK(c.solver.n == 400);
  CHECK(c.sde.trajectories == default_config().sde.trajectories);
}

TEST_CASE("stream seeds") {
  CHECK(stream_seed(1, "chains") == stream_seed(1, "chains"));
  CHECK(stream_seed(1, "chains") != stream_seed(2, "chains"));
  CHECK(stream_seed(1, "chains") != stream_seed(1, "sde"));
}

TEST_CASE("criterion line") {
  CriterionResult r;
  r.id = 3;
  r.name = "x";
  r.passed = true;
  CHECK(r.line() == "PASS  criterion 3  x");
  r.passed = false;
  r.notes = {"a", "b"};
  CHECK(r.line() == "FAIL  criterion 3  x  [a; b]");
  r.inconclusive = true;
  CHECK(r.line().rfind("INCONCLUSIVE", 0) == 0);
}

TEST_CASE("reference laws") {
  const auto& sol = solution();
  VerifySettings v;
  SUBCASE("exact draws pass their own comparison") {
    CHECK(synthetic_self_test(shift_reference(sol), v.shift_hist_max, v, 10000, 1) <= 0.05);
    CHECK(synthetic_self_test(endpoint_reference(sol), v.endpoint_hist_max, v, 10000, 2) <= 0.05);
  }
  SUBCASE("convolution keeps the squared mass") {
    ChainSet empty;
    const auto s = verify_endpoint(empty, sol, v, 3);
    CHECK(s.reference_check <= 1e-6);
  }
  SUBCASE("wrong law is detected") {
    std::mt19937_64 rng(4);
    std::vector<double> r(4000);
    for (auto& x : r) x = 3.0 * shift_reference(sol).sample_radius(rng);
    const auto lr = compare_radial_law(r, shift_reference(sol), v.shift_hist_max, v, 5);
    CHECK(lr.l1 - 2.0 * lr.l1_se > 0.05);
    CHECK_FALSE(lr.inconclusive);
  }
}

TEST_CASE("direct psi0^2 measure sits in the tube") {
  const auto& sol = solution();
  SamplerSettings s;
  VerifySettings v;
  ChainSet empty;
  const auto tube = verify_tube(empty, sol, s, v, 9);
  CHECK(tube.direct_distance <= tube.direct_tolerance);
  CHECK(tube.direct_tolerance == doctest::Approx(0.1 * sol.potential_at(0.0)));
}

TEST_CASE("evaluators") {
  VerifySettings v;
  SUBCASE("solver") {
    SolverCheck c;
    c.solution = solution();
    c.refined_rho = c.solution.rho * (1.0 + 1e-6);
    c.refinement_drift = 1e-6;
    const auto r = evaluate_solver(c);
    CHECK(r.passed);
    CHECK(r.detail["lambda_over_6rho"].get<double>() == doctest::Approx(1.0).epsilon(1e-4));
    c.refinement_drift = 1e-3;
    CHECK_FALSE(evaluate_solver(c).passed);
  }
  SUBCASE("shift law") {
    LawSection s;
    s.rows = {row(4, 1, 0.30, 0.01), row(8, 1, 0.20, 0.01), row(16, 1, 0.10, 0.01)};
    s.control = {row(4, 0, 0.40, 0.01), row(16, 0, 0.30, 0.01)};
    s.synthetic_l1 = 0.02;
    s.conclusive = true;
    s.trend_decreasing = true;
    s.control_mismatch = true;
    CHECK(evaluate_shift_law(s, v).passed);
    s.control_mismatch = false;
    const auto r = evaluate_shift_law(s, v);
    CHECK_FALSE(r.passed);
    CHECK_FALSE(check_passed(r, "negative_control_fails"));
    s.control_mismatch = true;
    s.conclusive = false;
    const auto q = evaluate_shift_law(s, v);
    CHECK_FALSE(q.passed);
    CHECK(q.inconclusive);
  }
  SUBCASE("sde") {
    SdeCheck c;
    c.pekar_l1 = 0.04;
    c.ou_l1 = 0.02;
    CHECK(evaluate_sde(c, SdeSettings{}).passed);
    c.ou_l1 = 0.031;
    CHECK_FALSE(evaluate_sde(c, SdeSettings{}).passed);
  }
  SUBCASE("identities") {
    IdentityCheck c;
    c.importance.z = 1.0;
    c.residual_h = 1e-4;
    c.residual_half = 0.5e-4;
    c.max_residual_h = 2e-4;
    c.budget = 5e-3;
    CHECK(evaluate_identities(c).passed);
    c.residual_half = 0.7e-4;
    CHECK_FALSE(evaluate_identities(c).passed);
    c.residual_half = 0.5e-4;
    c.importance.z = -3.5;
    CHECK_FALSE(evaluate_identities(c).passed);
  }
  SUBCASE("free energy") {
    const double rho = oracle::kRho;
    auto s = FreeEnergySection{{estimate(4, 1.3 * rho, 0.01), estimate(8, 1.02 * rho, 0.01)}, rho, 1 / (3 * M_PI)};
    CHECK(evaluate_free_energy(s).passed);
    s.estimates.back().estimate = 1.2 * rho;
    CHECK_FALSE(evaluate_free_energy(s).passed);
    s.estimates.back().estimate = 1.4 * rho;  // upper bound and trend both fail
    const auto r = evaluate_free_energy(s);
    CHECK_FALSE(check_passed(r, "gap_ratio_last_over_first"));
    s.estimates.back() = estimate(8, rho, 0.6 * rho);
    CHECK(evaluate_free_energy(s).inconclusive);
    s.estimates.pop_back();
    CHECK_FALSE(evaluate_free_energy(s).passed);
  }
}

TEST_CASE("hamiltonian trend on synthetic chains") {
  const auto& sol = solution();
  auto chain = [&](double t, double mean_h) {
    ChainOutput c;
    c.config.t = t;
    for (int i = 0; i < 50; ++i) {
      ChainSample s;
      s.hamiltonian = mean_h + 0.001 * ((i % 2) ? 1 : -1);
      c.samples.push_back(s);
    }
    return c;
  };
  const double target = sol.coulomb_energy;
  ChainSet set;
  set.tilted = {chain(4, 1.5 * target), chain(8, 1.2 * target), chain(16, 1.1 * target)};
  set.control = {chain(4, 3.0 * target), chain(16, 1.8 * target)};
  CHECK(evaluate_hamiltonian_trend(set, sol).passed);
  set.tilted.back() = chain(16, 1.3 * target);
  CHECK_FALSE(evaluate_hamiltonian_trend(set, sol).passed);
  set.tilted.back() = chain(16, 1.1 * target);
  set.control.back() = chain(16, 1.2 * target);
  CHECK_FALSE(evaluate_hamiltonian_trend(set, sol).passed);
}

TEST_CASE("run_all on a tiny configuration") {
  const auto dir = std::filesystem::temp_directory_path() / "pekar_test_run_all";
  std::filesystem::remove_all(dir);
  const auto config = parse_config(tiny_config());
  const auto a = run_all(config, dir / "a");
  const auto b = run_all(config, dir / "b");
  CHECK(a.body == b.body);
  CHECK(a.body["errors"].empty());
  REQUIRE(a.criteria.size() == 8);
  for (int i = 0; i < 8; ++i) CHECK(a.criteria[i].id == i + 1);
  for (const char* f : {"report.json", "solver.json", "solver.csv", "chain_t1_beta1.csv", "chain_t2_beta0.json",
                        "sde_pekar_histogram.csv", "sde_ou_histogram.csv", "sde.json", "free_energy_t2.json"})
    CHECK_MESSAGE(std::filesystem::exists(dir / "a" / f), f);
  std::ifstream in(dir / "a" / "report.json");
  const auto report = json::parse(in);
  CHECK(report["schema_version"] == kReportSchemaVersion);
  CHECK(report.contains("run_info"));
  CHECK(report["criteria"].size() == 8);
  std::filesystem::remove_all(dir);
}
