#include "pekar/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "pekar/coulomb.hpp"
#include "pekar/parallel.hpp"
#include "pekar/stats.hpp"

#ifndef PEKAR_VERSION
#define PEKAR_VERSION "0.0.0"
#endif

namespace pekar {

const char* version_string() { return PEKAR_VERSION; }

namespace {

void need(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError("config: " + msg);
}

bool increasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] > v[i - 1])) return false;
  return true;
}

nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }

Vec3 vec_from(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

std::string num(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

/// Accumulates named checks into a criterion.
struct Checker {
  CriterionResult& r;

  void operator()(const std::string& name, bool ok, double value, double bound, const std::string& relation) {
    r.detail["checks"][name] = {{"value", value}, {"bound", bound}, {"relation", relation}, {"pass", ok}};
    if (!ok) {
      r.passed = false;
      r.notes.push_back(name + " = " + num(value) + " (need " + relation + " " + num(bound) + ")");
    }
  }
  void flag(const std::string& name, bool ok, const std::string& why) {
    r.detail["checks"][name] = {{"pass", ok}, {"note", why}};
    if (!ok) {
      r.passed = false;
      r.notes.push_back(name + ": " + why);
    }
  }
};

CriterionResult criterion(int id, const std::string& name) {
  CriterionResult r;
  r.id = id;
  r.name = name;
  r.passed = true;
  r.detail = nlohmann::json::object();
  return r;
}

std::string tag(double t, double beta) {
  std::ostringstream os;
  os << "t" << t << "_beta" << beta;
  return os.str();
}

}  // namespace

// --- configuration ----------------------------------------------------------

ScfConfig SolverSettings::scf() const {
  ScfConfig c;
  c.grid = make_grid(r_max, n);
  c.mixing = mixing;
  c.tol = tol;
  c.max_iter = max_iter;
  return c;
}

void MasterConfig::validate() const {
  need(schema_version == kConfigSchemaVersion, "unsupported schema_version " + std::to_string(schema_version));
  try {
    solver.scf().validate();

    need(coulomb.shell_points >= 100 && coulomb.gaussian_points >= 2 * coulomb.gaussian_batches &&
             coulomb.gaussian_batches >= 2,
         "coulomb point counts too small");
    need(coulomb.oracle_points >= 2 && coulomb.shell_radius > 0 && coulomb.gaussian_sigma > 0, "coulomb settings");
    need(coulomb.split_t0 > 0 && coulomb.split_t0 < coulomb.split_t, "coulomb split times");

    need(sampler.t_grid.size() >= 2 && increasing(sampler.t_grid) && sampler.t_grid.front() > 0,
         "sampler.t_grid needs at least two increasing positive times");
    need(sampler.steps >= 2, "sampler.steps must be at least 2");
    for (double t : sampler.t_grid) {
      ChainConfig c = sampler.chain;
      c.t = t;
      c.h = t / static_cast<double>(sampler.steps);
      c.validate();
    }
    need(!sampler.epsilons.empty(), "sampler.epsilons must not be empty");

    need(soundness.t > 0 && soundness.steps >= 2 && soundness.draws >= 10 && soundness.thinning > 0 &&
             soundness.burn_in > 0 && soundness.balance_trials > 0,
         "soundness settings");

    const auto& b = free_energy.betas;
    need(!b.empty() && increasing(b), "free_energy.betas must be increasing");
    need(b.front() == 0.0, "free_energy.betas must include 0");
    need(std::find(b.begin(), b.end(), 1.0) != b.end(), "free_energy.betas must include 1.0");
    need(!free_energy.t_grid.empty() && increasing(free_energy.t_grid), "free_energy.t_grid must be increasing");
    for (double t : free_energy.t_grid) {
      LadderConfig l;
      l.chain.t = t;
      l.chain.h = free_energy.h;
      l.chain.burn_in = free_energy.burn_in;
      l.chain.draws = free_energy.draws;
      l.chain.thinning = free_energy.thinning;
      l.betas = b;
      l.swap_interval = free_energy.swap_interval;
      l.validate();
    }

    SdeConfig s;
    s.T = sde.T;
    s.h = sde.h;
    s.bins = sde.bins;
    s.hist_max = sde.hist_max;
    s.record_stride = sde.record_stride;
    s.validate();
    need(sde.T > 0 && sde.trajectories > 0 && sde.ou_sigma > 0 && sde.ou_hist_max > 0, "sde settings");
    need(sde.start_paths >= 2 && sde.start_horizon > 0 && sde.start_bins > 0, "sde stationarity settings");
    (void)step_count(sde.start_horizon, sde.h);

    (void)step_count(identities.t, identities.h);
    (void)step_count(identities.t0, identities.pathwise_h);
    need(identities.paths >= 2 && identities.pathwise_seeds >= 1 && identities.bump_width > 0, "identity settings");

    need(verify.bins > 0 && verify.bootstrap >= 2 && verify.min_ess > 0 && verify.synthetic_samples > 0 &&
             verify.shift_hist_max > 0 && verify.endpoint_hist_max > 0 && verify.direct_points > 0,
         "verify settings");
    need(soft_budget_hours > 0, "soft_budget_hours must be positive");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

MasterConfig default_config() {
  MasterConfig c;
  c.sampler.chain.burn_in = 100000;
  c.sampler.chain.draws = 2000;
  c.sampler.chain.thinning = 100;
  return c;
}

MasterConfig parse_config(const nlohmann::json& j) {
  static const std::vector<std::string> known = {"schema_version", "seed",   "solver",      "coulomb",
                                                 "sampler",        "soundness", "free_energy", "sde",
                                                 "identities",     "verify", "soft_budget_hours"};
  need(j.is_object(), "top level must be an object");
  for (const auto& [key, _] : j.items())
    need(std::find(known.begin(), known.end(), key) != known.end(), "unknown key '" + key + "'");

  MasterConfig c = default_config();
  try {
    c.schema_version = j.value("schema_version", c.schema_version);
    c.seed = j.value("seed", c.seed);
    c.soft_budget_hours = j.value("soft_budget_hours", c.soft_budget_hours);
    if (j.contains("solver")) {
      const auto& s = j["solver"];
      c.solver.r_max = s.value("r_max", c.solver.r_max);
      c.solver.n = s.value("n", c.solver.n);
      c.solver.tol = s.value("tol", c.solver.tol);
      c.solver.mixing = s.value("mixing", c.solver.mixing);
      c.solver.max_iter = s.value("max_iter", c.solver.max_iter);
    }
    if (j.contains("coulomb")) {
      const auto& s = j["coulomb"];
      auto& o = c.coulomb;
      o.shell_points = s.value("shell_points", o.shell_points);
      o.shell_radius = s.value("shell_radius", o.shell_radius);
      o.gaussian_points = s.value("gaussian_points", o.gaussian_points);
      o.gaussian_batches = s.value("gaussian_batches", o.gaussian_batches);
      o.gaussian_sigma = s.value("gaussian_sigma", o.gaussian_sigma);
      o.oracle_points = s.value("oracle_points", o.oracle_points);
      o.split_t = s.value("split_t", o.split_t);
      o.split_t0 = s.value("split_t0", o.split_t0);
      o.split_steps = s.value("split_steps", o.split_steps);
    }
    if (j.contains("sampler")) {
      const auto& s = j["sampler"];
      auto& o = c.sampler;
      if (s.contains("chain")) o.chain = chain_config_from_json(s["chain"], o.chain);
      o.t_grid = s.value("t_grid", o.t_grid);
      o.steps = s.value("steps", o.steps);
      o.negative_control = s.value("negative_control", o.negative_control);
      o.epsilons = s.value("epsilons", o.epsilons);
    }
    if (j.contains("soundness")) {
      const auto& s = j["soundness"];
      auto& o = c.soundness;
      o.t = s.value("t", o.t);
      o.steps = s.value("steps", o.steps);
      o.burn_in = s.value("burn_in", o.burn_in);
      o.draws = s.value("draws", o.draws);
      o.thinning = s.value("thinning", o.thinning);
      o.balance_trials = s.value("balance_trials", o.balance_trials);
    }
    if (j.contains("free_energy")) {
      const auto& s = j["free_energy"];
      auto& o = c.free_energy;
      o.t_grid = s.value("t_grid", o.t_grid);
      o.h = s.value("h", o.h);
      o.betas = s.value("betas", o.betas);
      o.replica_exchange = s.value("replica_exchange", o.replica_exchange);
      o.swap_interval = s.value("swap_interval", o.swap_interval);
      o.burn_in = s.value("burn_in", o.burn_in);
      o.draws = s.value("draws", o.draws);
      o.thinning = s.value("thinning", o.thinning);
    }
    if (j.contains("sde")) {
      const auto& s = j["sde"];
      auto& o = c.sde;
      o.T = s.value("T", o.T);
      o.h = s.value("h", o.h);
      o.bins = s.value("bins", o.bins);
      o.hist_max = s.value("hist_max", o.hist_max);
      o.record_stride = s.value("record_stride", o.record_stride);
      o.trajectories = s.value("trajectories", o.trajectories);
      o.ou_sigma = s.value("ou_sigma", o.ou_sigma);
      o.ou_hist_max = s.value("ou_hist_max", o.ou_hist_max);
      o.start_paths = s.value("start_paths", o.start_paths);
      o.start_horizon = s.value("start_horizon", o.start_horizon);
      o.start_bins = s.value("start_bins", o.start_bins);
    }
    if (j.contains("identities")) {
      const auto& s = j["identities"];
      auto& o = c.identities;
      o.t = s.value("t", o.t);
      o.h = s.value("h", o.h);
      o.paths = s.value("paths", o.paths);
      if (s.contains("bump_center")) o.bump_center = vec_from(s["bump_center"]);
      o.bump_width = s.value("bump_width", o.bump_width);
      o.t0 = s.value("t0", o.t0);
      o.pathwise_h = s.value("pathwise_h", o.pathwise_h);
      o.pathwise_seeds = s.value("pathwise_seeds", o.pathwise_seeds);
    }
    if (j.contains("verify")) {
      const auto& s = j["verify"];
      auto& o = c.verify;
      o.shift_hist_max = s.value("shift_hist_max", o.shift_hist_max);
      o.endpoint_hist_max = s.value("endpoint_hist_max", o.endpoint_hist_max);
      o.bins = s.value("bins", o.bins);
      o.bootstrap = s.value("bootstrap", o.bootstrap);
      o.min_ess = s.value("min_ess", o.min_ess);
      o.synthetic_samples = s.value("synthetic_samples", o.synthetic_samples);
      o.synthetic_tolerance = s.value("synthetic_tolerance", o.synthetic_tolerance);
      o.direct_points = s.value("direct_points", o.direct_points);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const MasterConfig& c) {
  nlohmann::json chain = to_json(c.sampler.chain);
  chain.erase("t");
  chain.erase("h");
  chain.erase("beta");
  chain.erase("record_shift");
  return {
      {"schema_version", c.schema_version},
      {"seed", c.seed},
      {"soft_budget_hours", c.soft_budget_hours},
      {"solver",
       {{"r_max", c.solver.r_max}, {"n", c.solver.n}, {"tol", c.solver.tol}, {"mixing", c.solver.mixing},
        {"max_iter", c.solver.max_iter}}},
      {"coulomb",
       {{"shell_points", c.coulomb.shell_points},
        {"shell_radius", c.coulomb.shell_radius},
        {"gaussian_points", c.coulomb.gaussian_points},
        {"gaussian_batches", c.coulomb.gaussian_batches},
        {"gaussian_sigma", c.coulomb.gaussian_sigma},
        {"oracle_points", c.coulomb.oracle_points},
        {"split_t", c.coulomb.split_t},
        {"split_t0", c.coulomb.split_t0},
        {"split_steps", c.coulomb.split_steps}}},
      {"sampler",
       {{"chain", chain},
        {"t_grid", c.sampler.t_grid},
        {"steps", c.sampler.steps},
        {"negative_control", c.sampler.negative_control},
        {"epsilons", c.sampler.epsilons}}},
      {"soundness",
       {{"t", c.soundness.t},
        {"steps", c.soundness.steps},
        {"burn_in", c.soundness.burn_in},
        {"draws", c.soundness.draws},
        {"thinning", c.soundness.thinning},
        {"balance_trials", c.soundness.balance_trials}}},
      {"free_energy",
       {{"t_grid", c.free_energy.t_grid},
        {"h", c.free_energy.h},
        {"betas", c.free_energy.betas},
        {"replica_exchange", c.free_energy.replica_exchange},
        {"swap_interval", c.free_energy.swap_interval},
        {"burn_in", c.free_energy.burn_in},
        {"draws", c.free_energy.draws},
        {"thinning", c.free_energy.thinning}}},
      {"sde",
       {{"T", c.sde.T},
        {"h", c.sde.h},
        {"bins", c.sde.bins},
        {"hist_max", c.sde.hist_max},
        {"record_stride", c.sde.record_stride},
        {"trajectories", c.sde.trajectories},
        {"ou_sigma", c.sde.ou_sigma},
        {"ou_hist_max", c.sde.ou_hist_max},
        {"start_paths", c.sde.start_paths},
        {"start_horizon", c.sde.start_horizon},
        {"start_bins", c.sde.start_bins}}},
      {"identities",
       {{"t", c.identities.t},
        {"h", c.identities.h},
        {"paths", c.identities.paths},
        {"bump_center", vec_json(c.identities.bump_center)},
        {"bump_width", c.identities.bump_width},
        {"t0", c.identities.t0},
        {"pathwise_h", c.identities.pathwise_h},
        {"pathwise_seeds", c.identities.pathwise_seeds}}},
      {"verify",
       {{"shift_hist_max", c.verify.shift_hist_max},
        {"endpoint_hist_max", c.verify.endpoint_hist_max},
        {"bins", c.verify.bins},
        {"bootstrap", c.verify.bootstrap},
        {"min_ess", c.verify.min_ess},
        {"synthetic_samples", c.verify.synthetic_samples},
        {"synthetic_tolerance", c.verify.synthetic_tolerance},
        {"direct_points", c.verify.direct_points}}},
  };
}

std::uint64_t stream_seed(std::uint64_t root, const std::string& name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return derive_seed(root, h);
}

std::string CriterionResult::line() const {
  std::ostringstream os;
  os << (passed ? "PASS" : (inconclusive ? "INCONCLUSIVE" : "FAIL")) << "  criterion " << id << "  " << name;
  if (!notes.empty()) {
    os << "  [";
    for (std::size_t i = 0; i < notes.size(); ++i) os << (i ? "; " : "") << notes[i];
    os << "]";
  }
  return os.str();
}

nlohmann::json to_json(const CriterionResult& r) {
  return {{"id", r.id},
          {"name", r.name},
          {"passed", r.passed},
          {"inconclusive", r.inconclusive},
          {"notes", r.notes},
          {"detail", r.detail}};
}

// --- solver -----------------------------------------------------------------

SolverCheck run_solver_check(const SolverSettings& s) {
  SolverCheck c;
  c.solution = scf_iterate(s.scf());
  SolverSettings fine = s;
  fine.n = 2 * s.n;
  c.refined_rho = scf_iterate(fine.scf()).rho;
  c.refinement_drift = std::abs(c.refined_rho - c.solution.rho) / c.solution.rho;
  return c;
}

CriterionResult evaluate_solver(const SolverCheck& c) {
  auto r = criterion(1, "solver correctness");
  Checker check{r};
  const auto& s = c.solution;
  const double bound = 1.0 / (3.0 * M_PI);
  check("rho_vs_gaussian_bound", s.rho >= bound, s.rho, bound, ">=");
  check("virial_gap_over_rho", std::abs(s.virial_gap()) <= 1e-3 * s.rho, std::abs(s.virial_gap()) / s.rho, 1e-3, "<=");
  const double identity = std::abs(s.lambda - (4.0 * s.coulomb_energy - 2.0 * s.dirichlet));
  check("lambda_identity", identity <= 1e-8, identity, 1e-8, "<=");
  check("lambda_over_rho", s.lambda >= 2.0 * s.rho, s.lambda / s.rho, 2.0, ">=");
  check("el_residual_over_lambda", s.residual <= 1e-3 * s.lambda, s.residual / s.lambda, 1e-3, "<=");
  check("grid_refinement_drift", c.refinement_drift <= 1e-4, c.refinement_drift, 1e-4, "<=");
  r.detail["rho"] = s.rho;
  r.detail["refined_rho"] = c.refined_rho;
  r.detail["lambda"] = s.lambda;
  r.detail["lambda_over_6rho"] = s.lambda / (6.0 * s.rho);
  return r;
}

// --- coulomb ----------------------------------------------------------------

CriterionResult check_coulomb(const CoulombSettings& s, std::uint64_t seed) {
  auto r = criterion(2, "coulomb engine");
  Checker check{r};
  std::mt19937_64 rng(derive_seed(seed, 0));

  // shell theorem
  std::vector<Vec3> shell(s.shell_points);
  for (auto& p : shell) p = s.shell_radius * RadialSampler::uniform_direction(rng);
  const auto mu_shell = OccupationMeasure::uniform(shell, 0.0);
  double worst_inside = 0.0;
  for (double frac : {0.0, 0.25, 0.5, 0.7}) {
    const Vec3 x = frac * s.shell_radius * RadialSampler::uniform_direction(rng);
    const double v = lambda_at(mu_shell, x);
    worst_inside = std::max(worst_inside, std::abs(v * s.shell_radius - 1.0));
  }
  check("shell_inside_relative_error", worst_inside <= 0.01, worst_inside, 0.01, "<=");
  const Vec3 outside{2.0 * s.shell_radius, 0.0, 0.0};
  const double out_err = std::abs(lambda_at(mu_shell, outside) * 2.0 * s.shell_radius - 1.0);
  check("shell_outside_relative_error", out_err <= 0.01, out_err, 0.01, "<=");

  // Gaussian pairwise energy, batch means of the U-statistic
  std::normal_distribution<double> g(0.0, s.gaussian_sigma);
  const std::size_t per = s.gaussian_points / s.gaussian_batches;
  std::vector<double> batch(s.gaussian_batches);
  for (auto& b : batch) {
    std::vector<Vec3> pts(per);
    for (auto& p : pts) p = {g(rng), g(rng), g(rng)};
    const double nb = static_cast<double>(per);
    b = hamiltonian(OccupationMeasure::uniform(std::move(pts), 0.0)) * nb / (nb - 1.0);
  }
  const double exact = 1.0 / (s.gaussian_sigma * std::sqrt(M_PI));
  const double gm = mean(batch), gse = standard_error(batch);
  const double z = std::abs(gm - exact) / gse;
  check("gaussian_energy_z", z <= 3.0, z, 3.0, "<=");
  r.detail["gaussian_energy"] = {{"estimate", gm}, {"se", gse}, {"exact", exact}};

  // fast summation vs the plain double loop
  double worst_oracle = 0.0;
  for (double eta : {0.0, 0.05}) {
    std::vector<Vec3> pts(s.oracle_points);
    for (auto& p : pts) p = {g(rng), g(rng), g(rng)};
    const auto mu = OccupationMeasure::uniform(std::move(pts), eta);
    const double ref = hamiltonian_reference(mu);
    worst_oracle = std::max(worst_oracle, std::abs(hamiltonian(mu) - ref) / std::abs(ref));
  }
  check("pairwise_oracle_relative", worst_oracle <= 1e-12, worst_oracle, 1e-12, "<=");

  // time split of H for a path occupation measure
  const double h = s.split_t / static_cast<double>(s.split_steps);
  const auto path = sample_wiener(s.split_t, h, derive_seed(seed, 1));
  const auto split = splitting_check(occupation_of(path), s.split_t0, s.split_t);
  check("split_identity_relative", split.relative() <= 1e-10, split.relative(), 1e-10, "<=");
  return r;
}

// --- sampler soundness --------------------------------------------------------

CriterionResult check_sampler_soundness(const SoundnessSettings& s, std::uint64_t seed) {
  auto r = criterion(3, "sampler soundness");
  Checker check{r};
  ChainConfig c;
  c.t = s.t;
  c.h = s.t / static_cast<double>(s.steps);
  c.beta = 0.0;
  c.burn_in = s.burn_in;
  c.draws = s.draws;
  c.thinning = s.thinning;
  c.record_shift = false;

  std::vector<ChainOutput> runs(2);
  std::vector<std::exception_ptr> errors(2);
  parallel_for(2, [&](std::size_t i) {
    try {
      ChainConfig ci = c;
      ci.beta = i == 0 ? 0.0 : 1.0;
      runs[i] = run_chain(ci, nullptr, derive_seed(seed, i));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  const auto& free = runs[0];

  // endpoint variance per axis against t
  for (int axis = 0; axis < 3; ++axis) {
    std::vector<double> sq;
    for (const auto& smp : free.samples) sq.push_back(smp.endpoint[axis] * smp.endpoint[axis]);
    const double v = mean(sq);
    const double se = mcmc_standard_error(sq);
    const double zv = std::abs(v - s.t) / se;
    check(std::string("endpoint_variance_z_axis") + "xyz"[axis], zv <= 3.0, zv, 3.0, "<=");
  }
  const auto hs = free.hamiltonians();
  const double exact = wiener_mean_hamiltonian(c.t, c.h, c.softening());
  const double zh = std::abs(mean(hs) - exact) / mcmc_standard_error(hs);
  check("wiener_mean_h_z", zh <= 3.0, zh, 3.0, "<=");
  r.detail["wiener_mean_h"] = {{"estimate", mean(hs)}, {"se", mcmc_standard_error(hs)}, {"exact", exact}};
  std::uint64_t rejected = 0;
  for (std::size_t i = 0; i < kMoveTypes; ++i) rejected += free.stats.proposed[i] - free.stats.accepted[i];
  check("beta0_rejections", rejected == 0, static_cast<double>(rejected), 0.0, "==");

  // numerical detailed balance for every move type on evolving configurations
  double worst = 0.0;
  for (bool pinned : {true, false}) {
    ChainConfig cb = c;
    cb.beta = 1.0;
    cb.origin_start = pinned;
    auto path = sample_wiener(cb.t, cb.h, derive_seed(seed, pinned ? 10 : 11));
    path.origin_start = pinned;
    ChainState state(std::move(path), 1.0, cb.softening());
    std::mt19937_64 rng(derive_seed(seed, pinned ? 12 : 13));
    for (std::size_t k = 0; k < s.balance_trials; ++k) {
      for (std::size_t m = 0; m < kMoveTypes; ++m) {
        const auto type = static_cast<MoveType>(m);
        if (type == MoveType::translate && pinned) continue;
        Proposal p = state.propose(type, cb.moves, rng);
        state.evaluate(p);
        worst = std::max(worst, std::abs(std::expm1(detailed_balance_defect(state, p, cb.moves))));
      }
      for (int step = 0; step < 5; ++step) mh_step(state, cb, rng);
    }
  }
  check("detailed_balance_defect", worst <= 1e-12, worst, 1e-12, "<=");

  const double dev = std::max(runs[0].max_checkpoint_deviation, runs[1].max_checkpoint_deviation);
  check("cache_checkpoint_deviation", dev <= 1e-8, dev, 1e-8, "<=");
  r.detail["checkpoints"] = runs[0].checkpoints + runs[1].checkpoints;
  return r;
}

// --- chains and their verifiers ----------------------------------------------

ChainSet run_chain_set(const SamplerSettings& s, const PekarSolution* sol, std::uint64_t seed, bool record_shift) {
  ChainSet set;
  set.t = s.t_grid;
  const std::size_t nt = s.t_grid.size();
  const std::size_t jobs = s.negative_control ? 2 * nt : nt;
  std::vector<ChainOutput> out(jobs);
  std::vector<std::exception_ptr> errors(jobs);
  parallel_for(jobs, [&](std::size_t i) {
    try {
      ChainConfig c = s.chain;
      c.t = s.t_grid[i % nt];
      c.h = c.t / static_cast<double>(s.steps);
      c.beta = i < nt ? 1.0 : 0.0;
      c.record_shift = record_shift;
      out[i] = run_chain(c, sol, derive_seed(seed, i));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (std::size_t i = 0; i < jobs; ++i) (i < nt ? set.tilted : set.control).push_back(std::move(out[i]));
  return set;
}

CriterionResult evaluate_hamiltonian_trend(const ChainSet& set, const PekarSolution& sol) {
  auto r = criterion(4, "hamiltonian trend");
  Checker check{r};
  const double target = sol.coulomb_energy;
  auto rows = nlohmann::json::array();
  std::vector<double> gaps;
  for (const auto& ch : set.tilted) {
    const auto hs = ch.hamiltonians();
    const double gap = (mean(hs) - target) / target;
    gaps.push_back(gap);
    rows.push_back({{"t", ch.config.t}, {"beta", 1.0}, {"mean_h", mean(hs)}, {"se", mcmc_standard_error(hs)},
                    {"ess", effective_sample_size(hs)}, {"relative_gap", gap}, {"seed", ch.seed},
                    {"artifact", "chain_" + tag(ch.config.t, 1.0) + ".csv"}});
  }
  bool monotone = true;
  for (std::size_t i = 1; i < gaps.size(); ++i) monotone = monotone && std::abs(gaps[i]) < std::abs(gaps[i - 1]);
  check.flag("monotone_approach", monotone, "|mean H - H(psi0^2)| must shrink along the t grid");
  check("largest_t_relative_gap", std::abs(gaps.back()) <= 0.15, std::abs(gaps.back()), 0.15, "<=");
  double closest_control = INFINITY;
  for (const auto& ch : set.control) {
    const auto hs = ch.hamiltonians();
    const double gap = (mean(hs) - target) / target;
    closest_control = std::min(closest_control, std::abs(gap));
    rows.push_back({{"t", ch.config.t}, {"beta", 0.0}, {"mean_h", mean(hs)}, {"se", mcmc_standard_error(hs)},
                    {"ess", effective_sample_size(hs)}, {"relative_gap", gap}, {"seed", ch.seed},
                    {"artifact", "chain_" + tag(ch.config.t, 0.0) + ".csv"}});
  }
  if (set.control.empty()) {
    check.flag("control_gap", false, "negative control disabled");
  } else {
    check("control_min_relative_gap", closest_control > 0.30, closest_control, 0.30, ">");
  }
  r.detail["target_h"] = target;
  r.detail["rows"] = rows;
  return r;
}

RadialSampler shift_reference(const PekarSolution& sol) {
  const auto& g = sol.grid();
  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) v[i] = 4.0 * M_PI * g.node(i) * g.node(i) * sol.psi0[i];
  return RadialSampler(RadialFunction(g, std::move(v), Parity::even));
}

namespace {

RadialFunction endpoint_convolution(const PekarSolution& sol) {
  const auto& g = sol.grid();
  // the convolution is supported on [0, 2 r_max]
  return self_convolution(sol.psi0, 2.0 * g.r_max(), g.size());
}

}  // namespace

RadialSampler endpoint_reference(const PekarSolution& sol) {
  const auto conv = endpoint_convolution(sol);
  const auto& g = conv.grid();
  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) v[i] = 4.0 * M_PI * g.node(i) * g.node(i) * conv[i];
  return RadialSampler(RadialFunction(g, std::move(v), Parity::even));
}

LawRow compare_radial_law(std::span<const double> radii, const RadialSampler& reference, double hist_max,
                          const VerifySettings& v, std::uint64_t seed) {
  Histogram h(0.0, hist_max, v.bins);
  const auto probs = bin_probabilities(h, [&](double x) { return reference.cdf(x); });
  const auto boot = bootstrap_l1(radii, 0.0, hist_max, v.bins, probs, v.bootstrap, seed);
  LawRow row;
  row.samples = radii.size();
  row.ess = radii.size() > 3 ? effective_sample_size(radii) : 0.0;
  row.l1 = boot.estimate;
  // the i.i.d. bootstrap ignores autocorrelation; inflate by sqrt(n / ess)
  const double inflate = row.ess > 0 ? std::sqrt(std::max(1.0, static_cast<double>(row.samples) / row.ess)) : 1.0;
  row.l1_se = boot.standard_error * inflate;
  row.inconclusive = row.ess < v.min_ess;
  return row;
}

double synthetic_self_test(const RadialSampler& reference, double hist_max, const VerifySettings& v, std::size_t n,
                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Histogram h(0.0, hist_max, v.bins);
  for (std::size_t i = 0; i < n; ++i) h.add(reference.sample_radius(rng));
  return l1_distance(h, bin_probabilities(h, [&](double x) { return reference.cdf(x); }));
}

namespace {

LawSection verify_law(const std::string& statistic, const ChainSet& set, const RadialSampler& ref, double hist_max,
                      const VerifySettings& v, std::uint64_t seed,
                      const std::function<std::vector<double>(const ChainOutput&)>& extract) {
  LawSection s;
  s.statistic = statistic;
  std::uint64_t k = 0;
  for (const auto& ch : set.tilted) {
    auto row = compare_radial_law(extract(ch), ref, hist_max, v, derive_seed(seed, k++));
    row.t = ch.config.t;
    row.beta = 1.0;
    s.rows.push_back(row);
  }
  for (const auto& ch : set.control) {
    auto row = compare_radial_law(extract(ch), ref, hist_max, v, derive_seed(seed, k++));
    row.t = ch.config.t;
    row.beta = 0.0;
    s.control.push_back(row);
  }
  s.synthetic_l1 = synthetic_self_test(ref, hist_max, v, v.synthetic_samples, derive_seed(seed, 1000));
  s.conclusive = !s.rows.empty() && std::none_of(s.rows.begin(), s.rows.end(), [](const LawRow& r) { return r.inconclusive; });
  bool trend = s.rows.size() >= 2 && s.rows.back().l1 < s.rows.front().l1;
  for (std::size_t i = 1; i < s.rows.size(); ++i)
    trend = trend && s.rows[i].l1 <= s.rows[i - 1].l1 + 2.0 * std::hypot(s.rows[i].l1_se, s.rows[i - 1].l1_se);
  s.trend_decreasing = trend;
  s.control_mismatch = !s.control.empty() && std::all_of(s.control.begin(), s.control.end(), [&](const LawRow& r) {
    return r.l1 - 2.0 * r.l1_se > v.synthetic_tolerance;
  });
  return s;
}

nlohmann::json law_row_json(const LawRow& r, const std::string& statistic) {
  return {{"t", r.t},         {"beta", r.beta},   {"samples", r.samples},
          {"ess", r.ess},     {"l1", r.l1},       {"l1_se", r.l1_se},
          {"inconclusive", r.inconclusive},
          {"artifact", "chain_" + tag(r.t, r.beta) + ".csv"},
          {"statistic", statistic}};
}

}  // namespace

nlohmann::json LawSection::to_json() const {
  auto rj = nlohmann::json::array();
  for (const auto& r : rows) rj.push_back(law_row_json(r, statistic));
  auto cj = nlohmann::json::array();
  for (const auto& r : control) cj.push_back(law_row_json(r, statistic));
  nlohmann::json j = {{"statistic", statistic},
                      {"rows", rj},
                      {"control", cj},
                      {"synthetic_l1", synthetic_l1},
                      {"trend_decreasing", trend_decreasing},
                      {"conclusive", conclusive},
                      {"control_mismatch", control_mismatch}};
  if (statistic == "endpoint_radius") j["reference_mass_check"] = reference_check;
  return j;
}

LawSection verify_shift_law(const ChainSet& set, const PekarSolution& sol, const VerifySettings& v, std::uint64_t seed) {
  return verify_law("shift_radius", set, shift_reference(sol), v.shift_hist_max, v, seed,
                    [](const ChainOutput& c) { return c.shift_radii(); });
}

LawSection verify_endpoint(const ChainSet& set, const PekarSolution& sol, const VerifySettings& v, std::uint64_t seed) {
  auto s = verify_law("endpoint_radius", set, endpoint_reference(sol), v.endpoint_hist_max, v, seed,
                      [](const ChainOutput& c) { return c.endpoint_radii(); });
  const double m1 = integrate_3d(sol.psi0);
  s.reference_check = std::abs(integrate_3d(endpoint_convolution(sol)) - m1 * m1) / (m1 * m1);
  return s;
}

CriterionResult evaluate_shift_law(const LawSection& s, const VerifySettings& v) {
  auto r = criterion(5, "shift law trend");
  Checker check{r};
  if (!s.conclusive) {
    r.inconclusive = true;
    check.flag("effective_sample_size", false, "fewer than " + num(v.min_ess) + " effective samples at some t");
  }
  check.flag("l1_decreasing_in_t", s.trend_decreasing, "L1 distance must decrease along the t grid");
  check("synthetic_self_test_l1", s.synthetic_l1 <= v.synthetic_tolerance, s.synthetic_l1, v.synthetic_tolerance, "<=");
  check.flag("negative_control_fails", s.control_mismatch, "beta = 0 histogram must be reported as mismatching");
  r.detail["section"] = s.to_json();
  return r;
}

nlohmann::json TubeSection::to_json() const {
  auto rj = nlohmann::json::array();
  for (const auto& r : rows) {
    rj.push_back({{"t", r.t},
                  {"beta", r.beta},
                  {"q10", r.q10},
                  {"q50", r.q50},
                  {"q90", r.q90},
                  {"exceedance", r.exceedance},
                  {"artifact", "chain_" + tag(r.t, r.beta) + ".csv"}});
  }
  return {{"epsilons", epsilons},
          {"rows", rj},
          {"direct_distance", direct_distance},
          {"direct_tolerance", direct_tolerance},
          {"tilted_median_decreasing", tilted_median_decreasing},
          {"control_bounded_away", control_bounded_away}};
}

TubeSection verify_tube(const ChainSet& set, const PekarSolution& sol, const SamplerSettings& s,
                        const VerifySettings& v, std::uint64_t seed) {
  TubeSection out;
  out.epsilons = s.epsilons;
  auto add = [&](const ChainOutput& ch, double beta) {
    const auto d = ch.orbit_distances();
    TubeRow row;
    row.t = ch.config.t;
    row.beta = beta;
    row.q10 = quantile(d, 0.1);
    row.q50 = quantile(d, 0.5);
    row.q90 = quantile(d, 0.9);
    for (double eps : s.epsilons) {
      const auto over = std::count_if(d.begin(), d.end(), [&](double x) { return x > eps; });
      row.exceedance.push_back(static_cast<double>(over) / static_cast<double>(d.size()));
    }
    out.rows.push_back(row);
  };
  for (const auto& ch : set.tilted) add(ch, 1.0);
  for (const auto& ch : set.control) add(ch, 0.0);

  const double peak = sol.potential_at(0.0);
  out.direct_tolerance = 0.1 * peak;
  const auto g = sol.grid();
  std::vector<double> dens(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) dens[i] = 4.0 * M_PI * g.node(i) * g.node(i) * sol.psi0[i] * sol.psi0[i];
  const RadialSampler law(RadialFunction(g, std::move(dens), Parity::even));
  std::mt19937_64 rng(seed);
  std::vector<Vec3> pts(v.direct_points);
  for (auto& p : pts) p = law.sample_point(rng);
  out.direct_distance = best_shift(OccupationMeasure::uniform(std::move(pts), 0.0), sol, s.chain.shift).distance;

  bool dec = set.tilted.size() >= 2;
  for (std::size_t i = 1; i < set.tilted.size(); ++i) dec = dec && out.rows[i].q50 < out.rows[i - 1].q50;
  out.tilted_median_decreasing = dec;
  out.control_bounded_away = !set.control.empty();
  for (std::size_t i = set.tilted.size(); i < out.rows.size(); ++i)
    out.control_bounded_away = out.control_bounded_away && out.rows[i].q50 > out.direct_tolerance;
  return out;
}

// --- SDE ----------------------------------------------------------------------

SdeCheck run_sde_check(const SdeSettings& s, const PekarSolution& sol, std::uint64_t seed) {
  SdeCheck out;
  const PekarTilt pekar(sol);
  const GaussianTilt ou(s.ou_sigma);
  SdeConfig c;
  c.T = s.T;
  c.h = s.h;
  c.bins = s.bins;
  c.hist_max = s.hist_max;
  c.record_stride = s.record_stride;
  c.seed = derive_seed(seed, 0);
  out.pekar = s.trajectories == 1 ? simulate(c, pekar) : simulate_many(c, pekar, s.trajectories);
  out.pekar_reference = stationary_reference(out.pekar.radial, pekar);
  out.pekar_l1 = l1_distance(out.pekar.radial, out.pekar_reference);

  SdeConfig co = c;
  co.hist_max = s.ou_hist_max;
  co.seed = derive_seed(seed, 1);
  out.ou = s.trajectories == 1 ? simulate(co, ou) : simulate_many(co, ou, s.trajectories);
  out.ou_reference = stationary_reference(out.ou.radial, ou);
  out.ou_l1 = l1_distance(out.ou.radial, out.ou_reference);

  // start from psi0^2 and look at a fixed horizon
  const auto& g = sol.grid();
  std::vector<double> dens(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) dens[i] = 4.0 * M_PI * g.node(i) * g.node(i) * sol.psi0[i] * sol.psi0[i];
  const RadialSampler law(RadialFunction(g, std::move(dens), Parity::even));
  const std::size_t steps = step_count(s.start_horizon, s.h);
  std::vector<double> final_r(s.start_paths);
  std::vector<std::exception_ptr> errors(s.start_paths);
  parallel_for(s.start_paths, [&](std::size_t i) {
    try {
      std::mt19937_64 rng(derive_seed(seed, 100 + i));
      SdeConfig ci;
      ci.T = s.start_horizon;
      ci.h = s.h;
      ci.x0 = law.sample_point(rng);
      ci.seed = derive_seed(seed, 100 + s.start_paths + i);
      ci.hist_max = s.hist_max;
      ci.bins = 1;
      ci.record_stride = steps;
      final_r[i] = norm(simulate(ci, pekar).final_position);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  Histogram hs(0.0, s.hist_max, s.start_bins);
  for (double x : final_r) hs.add(x);
  out.start_l1 = l1_distance(hs, stationary_reference(hs, pekar));
  return out;
}

CriterionResult evaluate_sde(const SdeCheck& c, const SdeSettings& s) {
  auto r = criterion(6, "pekar process stationarity");
  Checker check{r};
  check("pekar_radial_l1", c.pekar_l1 <= 0.05, c.pekar_l1, 0.05, "<=");
  check("ou_radial_l1", c.ou_l1 <= 0.03, c.ou_l1, 0.03, "<=");
  r.detail["stationary_start_l1"] = c.start_l1;
  r.detail["stationary_start_pass"] = c.start_l1 <= 0.05;
  r.detail["far_field_steps"] = c.pekar.far_field_steps;
  r.detail["T"] = s.T;
  r.detail["h"] = s.h;
  r.detail["trajectories"] = s.trajectories;
  r.detail["artifacts"] = {"sde_pekar_histogram.csv", "sde_ou_histogram.csv"};
  return r;
}

// --- identities -------------------------------------------------------------

IdentityCheck run_identity_check(const IdentitySettings& s, const PekarSolution& sol, std::uint64_t seed) {
  IdentityCheck out;
  const Vec3 a = s.bump_center;
  const double w2 = 2.0 * s.bump_width * s.bump_width;
  const PekarTilt tilt(sol);
  out.importance = importance_check(tilt, s.t, s.h, s.paths, [&](const Vec3& x) { return std::exp(-norm2(x - a) / w2); },
                                    derive_seed(seed, 0));
  out.budget = 5e-3 * sol.lambda;
  std::vector<double> coarse(s.pathwise_seeds), fine(s.pathwise_seeds);
  parallel_for(s.pathwise_seeds, [&](std::size_t k) {
    const auto path = sample_wiener(s.t0, s.pathwise_h, derive_seed(seed, 10 + k));
    coarse[k] = pathwise_el_check(path, sol).residual;
    fine[k] = pathwise_el_check(refine_path(path, derive_seed(seed, 10 + s.pathwise_seeds + k)), sol).residual;
  });
  out.residual_h = mean(coarse);
  out.residual_half = mean(fine);
  out.max_residual_h = *std::max_element(coarse.begin(), coarse.end());
  DiscretePath still;
  still.h = s.pathwise_h;
  still.origin_start = false;
  still.positions.assign(step_count(s.t0, s.pathwise_h) + 1, Vec3{1.3, 0.0, 0.0});
  out.constant_path_residual = pathwise_el_check(still, sol).residual;
  return out;
}

CriterionResult evaluate_identities(const IdentityCheck& c) {
  auto r = criterion(7, "girsanov and pathwise identities");
  Checker check{r};
  check("importance_sampling_abs_z", std::abs(c.importance.z) <= 3.0, std::abs(c.importance.z), 3.0, "<=");
  check("pathwise_residual_max", c.max_residual_h <= c.budget, c.max_residual_h, c.budget, "<=");
  const double ratio = c.residual_half / c.residual_h;
  check("halving_ratio_low", ratio >= 0.375, ratio, 0.375, ">=");
  check("halving_ratio_high", ratio <= 0.625, ratio, 0.625, "<=");
  r.detail["importance"] = {{"weighted_mean", c.importance.weighted_mean},
                            {"weighted_se", c.importance.weighted_se},
                            {"wiener_mean", c.importance.wiener_mean},
                            {"wiener_se", c.importance.wiener_se},
                            {"z", c.importance.z}};
  r.detail["pathwise"] = {{"mean_residual_h", c.residual_h},
                          {"mean_residual_half_h", c.residual_half},
                          {"constant_path_residual", c.constant_path_residual}};
  return r;
}

// --- free energy --------------------------------------------------------------

std::vector<FreeEnergyEstimate> run_free_energy(const FreeEnergySettings& s, std::uint64_t seed) {
  std::vector<FreeEnergyEstimate> out;
  for (std::size_t k = 0; k < s.t_grid.size(); ++k) {
    LadderConfig l;
    l.chain.t = s.t_grid[k];
    l.chain.h = s.h;
    l.chain.burn_in = s.burn_in;
    l.chain.draws = s.draws;
    l.chain.thinning = s.thinning;
    l.chain.record_shift = false;
    l.betas = s.betas;
    l.replica_exchange = s.replica_exchange;
    l.swap_interval = s.swap_interval;
    out.push_back(free_energy_ti(l, derive_seed(seed, k)));
  }
  return out;
}

FreeEnergySection verify_free_energy(const std::vector<FreeEnergyEstimate>& estimates, const PekarSolution& sol) {
  FreeEnergySection s;
  s.estimates = estimates;
  s.rho = sol.rho;
  s.gaussian_bound = 1.0 / (3.0 * M_PI);
  return s;
}

nlohmann::json FreeEnergySection::to_json() const {
  auto rows = nlohmann::json::array();
  for (const auto& e : estimates) {
    auto j = pekar::to_json(e);
    j["gap_to_rho"] = e.estimate - rho;
    j["artifact"] = "free_energy_t" + num(e.t) + ".json";
    rows.push_back(j);
  }
  return {{"rho", rho}, {"gaussian_bound", gaussian_bound}, {"estimates", rows}};
}

CriterionResult evaluate_free_energy(const FreeEnergySection& s) {
  auto r = criterion(8, "free energy");
  Checker check{r};
  r.detail["section"] = s.to_json();
  if (s.estimates.size() < 2) {
    check.flag("t_grid", false, "needs two horizons for the trend");
    return r;
  }
  const auto& first = s.estimates.front();
  const auto& last = s.estimates.back();
  if (last.standard_error > 0.5 * s.rho) {
    r.inconclusive = true;
    check.flag("error_bar", false, "standard error exceeds half of rho");
  }
  check("estimate_positive", last.estimate > 0.0, last.estimate, 0.0, ">");
  check("estimate_over_rho_upper", last.estimate < 1.05 * s.rho, last.estimate / s.rho, 1.05, "<");
  check("estimate_over_rho_lower", last.estimate > 0.5 * s.rho, last.estimate / s.rho, 0.5, ">");
  const double g0 = std::abs(first.estimate - s.rho);
  const double g1 = std::abs(last.estimate - s.rho);
  check("gap_ratio_last_over_first", g1 < g0, g1 / g0, 1.0, "<");
  for (const auto& e : s.estimates)
    if (!e.monotone) r.notes.push_back("integrand not monotone in beta at t = " + num(e.t));
  return r;
}

// --- driver -------------------------------------------------------------------

bool ExperimentReport::all_passed() const {
  return !criteria.empty() && std::all_of(criteria.begin(), criteria.end(), [](const auto& c) { return c.passed; });
}

nlohmann::json ExperimentReport::to_json() const {
  nlohmann::json j = body;
  j["run_info"] = run_info;
  return j;
}

void write_json(const std::filesystem::path& file, const nlohmann::json& j) {
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  os << j.dump(2) << '\n';
}

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

CriterionResult failed(int id, const std::string& name, const std::string& why) {
  auto r = criterion(id, name);
  r.passed = false;
  r.notes.push_back(why);
  r.detail["error"] = why;
  return r;
}

}  // namespace

ExperimentReport run_all(const MasterConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  std::filesystem::create_directories(out_dir);
  ExperimentReport rep;
  auto& body = rep.body;
  body = {{"schema_version", kReportSchemaVersion}, {"version", version_string()}, {"config", to_json(config)}};
  body["sections"] = nlohmann::json::object();
  body["errors"] = nlohmann::json::object();
  rep.run_info = {{"timestamp", timestamp()}, {"threads", thread_count()}, {"timings_s", nlohmann::json::object()}};
  const auto start = Clock::now();
  std::map<int, CriterionResult> crit;

  auto stage = [&](const std::string& name, const std::function<void()>& fn) {
    const auto t0 = Clock::now();
    try {
      fn();
    } catch (const std::exception& e) {
      body["errors"][name] = e.what();
    }
    rep.run_info["timings_s"][name] = since(t0);
  };

  std::optional<SolverCheck> solver;
  stage("solver", [&] {
    const std::uint64_t seed = 0;  // deterministic, no randomness
    (void)seed;
    solver = run_solver_check(config.solver);
    write_json(out_dir / "solver.json", pekar::to_json(solver->solution));
    std::ofstream csv(out_dir / "solver.csv");
    write_solution_csv(csv, solver->solution);
    crit.emplace(1, evaluate_solver(*solver));
    auto sec = pekar::to_json(solver->solution);
    sec.erase("grid");
    sec["virial_gap"] = solver->solution.virial_gap();
    sec["refined_rho"] = solver->refined_rho;
    sec["refinement_drift"] = solver->refinement_drift;
    sec["artifact"] = "solver.json";
    body["sections"]["solver"] = sec;
  });
  if (!crit.count(1)) crit.emplace(1, failed(1, "solver correctness", "solver run failed"));
  const PekarSolution* sol = solver ? &solver->solution : nullptr;

  stage("coulomb", [&] {
    const auto seed = stream_seed(config.seed, "coulomb");
    auto r = check_coulomb(config.coulomb, seed);
    r.detail["seed"] = seed;
    crit.emplace(2, std::move(r));
  });
  if (!crit.count(2)) crit.emplace(2, failed(2, "coulomb engine", "coulomb run failed"));

  stage("soundness", [&] {
    const auto seed = stream_seed(config.seed, "soundness");
    auto r = check_sampler_soundness(config.soundness, seed);
    r.detail["seed"] = seed;
    crit.emplace(3, std::move(r));
  });
  if (!crit.count(3)) crit.emplace(3, failed(3, "sampler soundness", "sampler soundness run failed"));

  stage("chains", [&] {
    if (!sol) throw std::runtime_error("solver unavailable");
    const auto seed = stream_seed(config.seed, "chains");
    const auto set = run_chain_set(config.sampler, sol, seed, true);
    auto dump = [&](const ChainOutput& ch, double beta) {
      const std::string name = "chain_" + tag(ch.config.t, beta);
      std::ofstream csv(out_dir / (name + ".csv"));
      write_samples_csv(csv, ch);
      write_json(out_dir / (name + ".json"), pekar::to_json(ch));
    };
    for (const auto& ch : set.tilted) dump(ch, 1.0);
    for (const auto& ch : set.control) dump(ch, 0.0);
    crit.emplace(4, evaluate_hamiltonian_trend(set, *sol));
    const auto law_sec = verify_shift_law(set, *sol, config.verify, derive_seed(seed, 1 << 20));
    crit.emplace(5, evaluate_shift_law(law_sec, config.verify));
    body["sections"]["shift_law"] = law_sec.to_json();
    body["sections"]["endpoint"] =
        verify_endpoint(set, *sol, config.verify, derive_seed(seed, 2 << 20)).to_json();
    body["sections"]["tube"] = verify_tube(set, *sol, config.sampler, config.verify, derive_seed(seed, 3 << 20)).to_json();
    body["sections"]["chains_seed"] = seed;
  });
  if (!crit.count(4)) crit.emplace(4, failed(4, "hamiltonian trend", "chain runs failed"));
  if (!crit.count(5)) crit.emplace(5, failed(5, "shift law trend", "chain runs failed"));

  stage("sde", [&] {
    if (!sol) throw std::runtime_error("solver unavailable");
    const auto seed = stream_seed(config.seed, "sde");
    const auto c = run_sde_check(config.sde, *sol, seed);
    std::ofstream p(out_dir / "sde_pekar_histogram.csv");
    write_histogram_csv(p, c.pekar.radial, c.pekar_reference);
    std::ofstream o(out_dir / "sde_ou_histogram.csv");
    write_histogram_csv(o, c.ou.radial, c.ou_reference);
    auto r = evaluate_sde(c, config.sde);
    r.detail["seed"] = seed;
    r.detail["lambda"] = sol->lambda;
    write_json(out_dir / "sde.json", r.detail);
    crit.emplace(6, std::move(r));
  });
  if (!crit.count(6)) crit.emplace(6, failed(6, "pekar process stationarity", "SDE run failed"));

  stage("identities", [&] {
    if (!sol) throw std::runtime_error("solver unavailable");
    const auto seed = stream_seed(config.seed, "identities");
    auto r = evaluate_identities(run_identity_check(config.identities, *sol, seed));
    r.detail["seed"] = seed;
    crit.emplace(7, std::move(r));
  });
  if (!crit.count(7)) crit.emplace(7, failed(7, "girsanov and pathwise identities", "identity run failed"));

  stage("free_energy", [&] {
    if (!sol) throw std::runtime_error("solver unavailable");
    const auto seed = stream_seed(config.seed, "free_energy");
    const auto est = run_free_energy(config.free_energy, seed);
    for (const auto& e : est) write_json(out_dir / ("free_energy_t" + num(e.t) + ".json"), to_json(e));
    const auto sec = verify_free_energy(est, *sol);
    body["sections"]["free_energy"] = sec.to_json();
    body["sections"]["free_energy"]["seed"] = seed;
    crit.emplace(8, evaluate_free_energy(sec));
  });
  if (!crit.count(8)) crit.emplace(8, failed(8, "free energy", "free-energy run failed"));

  auto cj = nlohmann::json::array();
  for (auto& [id, r] : crit) {
    cj.push_back(to_json(r));
    rep.criteria.push_back(r);
  }
  body["criteria"] = cj;
  body["all_passed"] = rep.all_passed();
  const double total = since(start);
  rep.run_info["timings_s"]["total"] = total;
  rep.run_info["warnings"] = nlohmann::json::array();
  if (total > config.soft_budget_hours * 3600.0)
    rep.run_info["warnings"].push_back("run exceeded the soft budget of " + num(config.soft_budget_hours) + " h");
  write_json(out_dir / "report.json", rep.to_json());
  return rep;
}

}  // namespace pekar
