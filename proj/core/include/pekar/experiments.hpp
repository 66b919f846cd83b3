#pragma once

// Orchestration: versioned configuration, the verification sections that tie
// solver, sampler and SDE output together, the pass/fail criteria, and the
// run-all driver that writes every artifact plus a JSON report.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pekar/gibbs_sampler.hpp"
#include "pekar/pekar_sde.hpp"
#include "pekar/pekar_solver.hpp"

namespace pekar {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kReportSchemaVersion = 1;
const char* version_string();

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SolverSettings {
  double r_max = 20.0;
  std::size_t n = 2000;
  double tol = 1e-10;
  double mixing = 0.5;
  std::size_t max_iter = 2000;
  ScfConfig scf() const;
};

struct CoulombSettings {
  std::size_t shell_points = 10000;
  double shell_radius = 1.0;
  std::size_t gaussian_points = 10000;
  std::size_t gaussian_batches = 20;
  double gaussian_sigma = 1.0;
  std::size_t oracle_points = 256;
  double split_t = 8.0;
  double split_t0 = 3.0;
  std::size_t split_steps = 512;
};

struct SamplerSettings {
  ChainConfig chain;  // t, h and beta are set per run
  std::vector<double> t_grid{4.0, 8.0, 16.0};
  std::size_t steps = 512;  // m, so h = t / m
  bool negative_control = true;
  std::vector<double> epsilons{0.1, 0.2, 0.4};
};

struct SoundnessSettings {
  double t = 4.0;
  std::size_t steps = 128;
  std::size_t burn_in = 5000;
  std::size_t draws = 4000;
  std::size_t thinning = 25;
  std::size_t balance_trials = 200;
};

struct FreeEnergySettings {
  std::vector<double> t_grid{4.0, 8.0};
  double h = 1.0 / 32.0;
  std::vector<double> betas = default_beta_grid();
  bool replica_exchange = true;
  std::size_t swap_interval = 100;
  std::size_t burn_in = 50000;
  std::size_t draws = 2000;
  std::size_t thinning = 50;
};

struct SdeSettings {
  double T = 1e4;
  double h = 1e-3;
  std::size_t bins = 32;
  double hist_max = 8.0;
  std::size_t record_stride = 10;
  std::size_t trajectories = 1;
  double ou_sigma = 1.0;
  double ou_hist_max = 4.0;
  // stationarity from a psi0^2 start
  std::size_t start_paths = 20000;
  double start_horizon = 2.0;
  std::size_t start_bins = 16;
};

struct IdentitySettings {
  double t = 1.0;
  double h = 1e-3;
  std::size_t paths = 4000;
  Vec3 bump_center{0.5, 0.0, 0.0};
  double bump_width = 1.0;
  double t0 = 2.0;
  double pathwise_h = 1e-3;
  std::size_t pathwise_seeds = 20;
};

struct VerifySettings {
  double shift_hist_max = 8.0;
  double endpoint_hist_max = 12.0;
  std::size_t bins = 16;
  std::size_t bootstrap = 1000;
  double min_ess = 500.0;
  std::size_t synthetic_samples = 10000;
  double synthetic_tolerance = 0.05;
  std::size_t direct_points = 10000;
};

struct MasterConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t seed = 20240611;
  SolverSettings solver;
  CoulombSettings coulomb;
  SamplerSettings sampler;
  SoundnessSettings soundness;
  FreeEnergySettings free_energy;
  SdeSettings sde;
  IdentitySettings identities;
  VerifySettings verify;
  double soft_budget_hours = 2.0;

  /// Throws ConfigError.
  void validate() const;
};

MasterConfig default_config();
/// Missing keys keep their defaults; unknown top-level keys are rejected.
MasterConfig parse_config(const nlohmann::json& j);
nlohmann::json to_json(const MasterConfig& c);

/// Seed of a named sub-run.
std::uint64_t stream_seed(std::uint64_t root, const std::string& name);

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  bool inconclusive = false;
  std::vector<std::string> notes;  // one per failed or noteworthy check
  nlohmann::json detail;

  std::string line() const;
};

nlohmann::json to_json(const CriterionResult& r);

// --- solver -----------------------------------------------------------------

struct SolverCheck {
  PekarSolution solution;
  double refined_rho = 0.0;
  double refinement_drift = 0.0;  // relative
};

SolverCheck run_solver_check(const SolverSettings& s);
CriterionResult evaluate_solver(const SolverCheck& c);

// --- coulomb ----------------------------------------------------------------

CriterionResult check_coulomb(const CoulombSettings& s, std::uint64_t seed);

// --- sampler ----------------------------------------------------------------

CriterionResult check_sampler_soundness(const SoundnessSettings& s, std::uint64_t seed);

struct ChainSet {
  std::vector<double> t;
  std::vector<ChainOutput> tilted;   // beta = 1
  std::vector<ChainOutput> control;  // beta = 0, may be empty
};

/// Chains at every t of the grid, in parallel.
ChainSet run_chain_set(const SamplerSettings& s, const PekarSolution* sol, std::uint64_t seed, bool record_shift);

CriterionResult evaluate_hamiltonian_trend(const ChainSet& set, const PekarSolution& sol);

struct LawRow {
  double t = 0.0;
  double beta = 1.0;
  std::size_t samples = 0;
  double ess = 0.0;
  double l1 = 0.0;
  double l1_se = 0.0;
  bool inconclusive = false;
};

struct LawSection {
  std::string statistic;
  std::vector<LawRow> rows;     // beta = 1, increasing t
  std::vector<LawRow> control;  // beta = 0
  double synthetic_l1 = 0.0;
  bool trend_decreasing = false;
  bool conclusive = false;
  bool control_mismatch = false;  // every control row above the synthetic tolerance
  double reference_check = 0.0;   // endpoint only: |int psi0*psi0 - (int psi0)^2|
  nlohmann::json to_json() const;
};

/// Radial law comparison with a bootstrap error bar.
LawRow compare_radial_law(std::span<const double> radii, const RadialSampler& reference, double hist_max,
                          const VerifySettings& v, std::uint64_t seed);
/// L1 of `n` exact draws from the reference against itself.
double synthetic_self_test(const RadialSampler& reference, double hist_max, const VerifySettings& v, std::size_t n,
                           std::uint64_t seed);

/// Reference laws: 4 pi r^2 psi0 and 4 pi r^2 (psi0 * psi0).
RadialSampler shift_reference(const PekarSolution& sol);
RadialSampler endpoint_reference(const PekarSolution& sol);

LawSection verify_shift_law(const ChainSet& set, const PekarSolution& sol, const VerifySettings& v, std::uint64_t seed);
LawSection verify_endpoint(const ChainSet& set, const PekarSolution& sol, const VerifySettings& v, std::uint64_t seed);
CriterionResult evaluate_shift_law(const LawSection& s, const VerifySettings& v);

struct TubeRow {
  double t = 0.0;
  double beta = 1.0;
  double q10 = 0.0, q50 = 0.0, q90 = 0.0;
  std::vector<double> exceedance;  // per epsilon
};

struct TubeSection {
  std::vector<double> epsilons;
  std::vector<TubeRow> rows;
  double direct_distance = 0.0;  // measure sampled from psi0^2
  double direct_tolerance = 0.0;
  bool tilted_median_decreasing = false;
  bool control_bounded_away = false;
  nlohmann::json to_json() const;
};

TubeSection verify_tube(const ChainSet& set, const PekarSolution& sol, const SamplerSettings& s,
                        const VerifySettings& v, std::uint64_t seed);

// --- SDE and identities -----------------------------------------------------

struct SdeCheck {
  Trajectory pekar;
  Trajectory ou;
  std::vector<double> pekar_reference;
  std::vector<double> ou_reference;
  double pekar_l1 = 0.0;
  double ou_l1 = 0.0;
  double start_l1 = 0.0;  // psi0^2 start, fixed horizon
};

SdeCheck run_sde_check(const SdeSettings& s, const PekarSolution& sol, std::uint64_t seed);
CriterionResult evaluate_sde(const SdeCheck& c, const SdeSettings& s);

struct IdentityCheck {
  ImportanceCheck importance;
  double residual_h = 0.0;       // mean pathwise residual at h
  double residual_half = 0.0;    // same paths refined to h / 2
  double max_residual_h = 0.0;
  double constant_path_residual = 0.0;
  double budget = 0.0;           // 5e-3 lambda
};

IdentityCheck run_identity_check(const IdentitySettings& s, const PekarSolution& sol, std::uint64_t seed);
CriterionResult evaluate_identities(const IdentityCheck& c);

// --- free energy ------------------------------------------------------------

std::vector<FreeEnergyEstimate> run_free_energy(const FreeEnergySettings& s, std::uint64_t seed);

struct FreeEnergySection {
  std::vector<FreeEnergyEstimate> estimates;
  double rho = 0.0;
  double gaussian_bound = 0.0;
  nlohmann::json to_json() const;
};

FreeEnergySection verify_free_energy(const std::vector<FreeEnergyEstimate>& estimates, const PekarSolution& sol);
CriterionResult evaluate_free_energy(const FreeEnergySection& s);

// --- driver -----------------------------------------------------------------

struct ExperimentReport {
  nlohmann::json body;      // deterministic for a given configuration
  nlohmann::json run_info;  // timings, timestamp, warnings
  std::vector<CriterionResult> criteria;

  bool all_passed() const;
  nlohmann::json to_json() const;
};

/// Runs every section, writes artifacts and report.json to out_dir. Sub-run
/// failures are recorded in the report instead of propagating.
ExperimentReport run_all(const MasterConfig& config, const std::filesystem::path& out_dir);

/// Writes `j` with two-space indentation and a trailing newline.
void write_json(const std::filesystem::path& file, const nlohmann::json& j);

}  // namespace pekar
