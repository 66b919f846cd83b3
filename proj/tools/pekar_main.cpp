// pekar: command line front end for the solver, Coulomb engine, path sampler,
// Pekar SDE and the verification driver.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pekar/coulomb.hpp"
#include "pekar/experiments.hpp"
#include "pekar/gibbs_sampler.hpp"
#include "pekar/parallel.hpp"
#include "pekar/pekar_sde.hpp"
#include "pekar/pekar_solver.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::size_t threads = 0;
  std::string solution;  // directory holding solution.json + solution.csv
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Root seed (overrides the config)");
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--threads", c.threads, "Worker threads (0: hardware concurrency)");
}

json read_json(const std::string& file) {
  std::ifstream is(file);
  if (!is) throw std::runtime_error("cannot open " + file);
  return json::parse(is);
}

void apply_threads(const Common& c) {
  pekar::set_thread_count(c.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : c.threads);
}

pekar::MasterConfig master(const Common& c) {
  auto m = c.config.empty() ? pekar::default_config() : pekar::parse_config(read_json(c.config));
  if (c.seed) m.seed = *c.seed;
  return m;
}

void save_solution(const fs::path& dir, const pekar::PekarSolution& sol) {
  fs::create_directories(dir);
  pekar::write_json(dir / "solution.json", pekar::to_json(sol));
  std::ofstream csv(dir / "solution.csv");
  pekar::write_solution_csv(csv, sol);
}

pekar::PekarSolution obtain_solution(const std::string& dir, const pekar::SolverSettings& s) {
  if (dir.empty()) return pekar::scf_iterate(s.scf());
  std::ifstream csv(fs::path(dir) / "solution.csv");
  if (!csv) throw std::runtime_error("cannot open " + dir + "/solution.csv");
  return pekar::load_solution(read_json((fs::path(dir) / "solution.json").string()), csv);
}

// --- subcommands --------------------------------------------------------------

int cmd_solve(const Common& c, std::optional<double> rmax, std::optional<std::size_t> n, std::optional<double> tol,
              std::optional<double> mixing) {
  auto m = master(c);
  if (rmax) m.solver.r_max = *rmax;
  if (n) m.solver.n = *n;
  if (tol) m.solver.tol = *tol;
  if (mixing) m.solver.mixing = *mixing;
  const auto sol = pekar::scf_iterate(m.solver.scf());
  save_solution(c.out, sol);
  std::cout << "rho " << sol.rho << "  lambda " << sol.lambda << "  H " << sol.coulomb_energy << "  I "
            << sol.dirichlet << "  residual " << sol.residual << "  iterations " << sol.iterations << '\n';
  return 0;
}

/// "auto" or "cx,cy,cz,nx,ny,nz,spacing".
std::optional<pekar::EvalGrid> parse_grid(const std::string& spec) {
  if (spec.empty() || spec == "auto") return std::nullopt;
  std::stringstream ss(spec);
  std::vector<double> v;
  for (std::string tok; std::getline(ss, tok, ',');) v.push_back(std::stod(tok));
  if (v.size() != 7) throw std::invalid_argument("--eval-grid expects cx,cy,cz,nx,ny,nz,spacing");
  pekar::EvalGrid g;
  g.center = {v[0], v[1], v[2]};
  g.half_counts = {static_cast<std::size_t>(v[3]), static_cast<std::size_t>(v[4]), static_cast<std::size_t>(v[5])};
  g.spacing = v[6];
  return g;
}

int cmd_coulomb(const Common& c, const std::string& measure, const std::string& grid_spec, std::optional<double> eta) {
  auto m = master(c);
  fs::create_directories(c.out);
  if (measure.empty()) {
    const auto r = pekar::check_coulomb(m.coulomb, pekar::stream_seed(m.seed, "coulomb"));
    pekar::write_json(fs::path(c.out) / "coulomb_check.json", pekar::to_json(r));
    std::cout << r.line() << '\n';
    return r.passed ? 0 : 1;
  }
  double softening = eta.value_or(0.0);
  const fs::path sidecar = fs::path(measure).replace_extension(".json");
  if (!eta && fs::exists(sidecar)) softening = read_json(sidecar.string()).value("eta", 0.0);
  std::ifstream is(measure);
  if (!is) throw std::runtime_error("cannot open " + measure);
  const auto mu = pekar::read_measure_csv(is, softening);

  const auto sol = obtain_solution(c.solution, m.solver);
  const auto search = pekar::best_shift(mu, sol);
  const auto grid = parse_grid(grid_spec).value_or(pekar::EvalGrid::covering(mu, search.shift, 3.0, 6000));
  std::ofstream csv(fs::path(c.out) / "lambda_grid.csv");
  csv << "x,y,z,lambda_mu,lambda_psi0_sq\n";
  csv.precision(17);
  for (const auto& p : grid.points())
    csv << p.x << ',' << p.y << ',' << p.z << ',' << pekar::lambda_at(mu, p) << ','
        << sol.potential_at(norm(p - search.shift)) << '\n';
  const auto w1 = pekar::marginal_w1(mu, sol, search.shift);
  const json summary = {{"points", mu.size()},
                        {"eta", softening},
                        {"hamiltonian", pekar::hamiltonian(mu)},
                        {"best_shift", {search.shift.x, search.shift.y, search.shift.z}},
                        {"orbit_distance", search.distance},
                        {"shift_resolution", search.resolution},
                        {"marginal_w1", w1},
                        {"grid_points", grid.size()},
                        {"artifact", "lambda_grid.csv"}};
  pekar::write_json(fs::path(c.out) / "coulomb.json", summary);
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_sample(const Common& c) {
  pekar::ChainConfig cfg;
  pekar::SolverSettings solver;
  std::uint64_t seed = pekar::default_config().seed;
  if (!c.config.empty()) {
    auto j = read_json(c.config);
    if (j.contains("solver")) {
      solver.r_max = j["solver"].value("r_max", solver.r_max);
      solver.n = j["solver"].value("n", solver.n);
      j.erase("solver");
    }
    seed = j.value("seed", seed);
    j.erase("seed");
    cfg = pekar::chain_config_from_json(j, cfg);
  }
  if (c.seed) seed = *c.seed;
  cfg.validate();
  std::optional<pekar::PekarSolution> sol;
  if (cfg.record_shift) sol = obtain_solution(c.solution, solver);
  const auto out = pekar::run_chain(cfg, sol ? &*sol : nullptr, seed);
  fs::create_directories(c.out);
  std::ofstream csv(fs::path(c.out) / "samples.csv");
  pekar::write_samples_csv(csv, out);
  auto summary = pekar::to_json(out);
  summary["artifact"] = "samples.csv";
  pekar::write_json(fs::path(c.out) / "chain.json", summary);
  std::cout << "mean H " << summary["mean_h"] << " +- " << summary["se_h"] << "  draws " << out.samples.size() << '\n';
  return 0;
}

int cmd_sde(const Common& c) {
  json j = c.config.empty() ? json::object() : read_json(c.config);
  const std::string kind = j.value("tilt", "pekar");
  const double sigma = j.value("sigma", 1.0);
  const std::size_t count = j.value("trajectories", std::size_t{1});
  pekar::SolverSettings solver;
  if (j.contains("solver")) {
    solver.r_max = j["solver"].value("r_max", solver.r_max);
    solver.n = j["solver"].value("n", solver.n);
  }
  for (const char* k : {"tilt", "sigma", "trajectories", "solver"}) j.erase(k);
  auto cfg = pekar::sde_config_from_json(j);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();

  std::optional<pekar::PekarSolution> sol;
  std::unique_ptr<pekar::RadialTilt> tilt;
  if (kind == "pekar") {
    sol = obtain_solution(c.solution, solver);
    tilt = std::make_unique<pekar::PekarTilt>(*sol);
  } else if (kind == "gaussian") {
    tilt = std::make_unique<pekar::GaussianTilt>(sigma);
  } else {
    throw std::invalid_argument("tilt must be 'pekar' or 'gaussian'");
  }
  const auto traj = count == 1 ? pekar::simulate(cfg, *tilt) : pekar::simulate_many(cfg, *tilt, count);
  const auto ref = pekar::stationary_reference(traj.radial, *tilt);
  fs::create_directories(c.out);
  std::ofstream csv(fs::path(c.out) / "sde_histogram.csv");
  pekar::write_histogram_csv(csv, traj.radial, ref);
  json summary = {{"config", pekar::to_json(cfg)},
                  {"tilt", kind},
                  {"trajectories", count},
                  {"l1", pekar::l1_distance(traj.radial, ref)},
                  {"steps", traj.steps},
                  {"far_field_steps", traj.far_field_steps},
                  {"seed", cfg.seed},
                  {"artifact", "sde_histogram.csv"}};
  if (sol) summary["lambda"] = sol->lambda;
  if (kind == "gaussian") summary["sigma"] = sigma;
  pekar::write_json(fs::path(c.out) / "sde.json", summary);
  std::cout << "L1 " << summary["l1"] << "  steps " << traj.steps << '\n';
  return 0;
}

int cmd_free_energy(const Common& c) {
  const auto m = master(c);
  const auto sol = obtain_solution(c.solution, m.solver);
  const auto est = pekar::run_free_energy(m.free_energy, pekar::stream_seed(m.seed, "free_energy"));
  fs::create_directories(c.out);
  for (const auto& e : est) {
    std::ostringstream name;
    name << "free_energy_t" << e.t << ".json";
    pekar::write_json(fs::path(c.out) / name.str(), pekar::to_json(e));
  }
  const auto section = pekar::verify_free_energy(est, sol);
  const auto r = pekar::evaluate_free_energy(section);
  pekar::write_json(fs::path(c.out) / "free_energy.json", section.to_json());
  for (const auto& e : est)
    std::cout << "t " << e.t << "  estimate " << e.estimate << " +- " << e.standard_error << "  (rho " << sol.rho
              << ")\n";
  std::cout << r.line() << '\n';
  return r.passed ? 0 : 1;
}

int cmd_verify(const Common& c) {
  const auto m = master(c);
  const auto sol = obtain_solution(c.solution, m.solver);
  const auto seed = pekar::stream_seed(m.seed, "chains");
  const auto set = pekar::run_chain_set(m.sampler, &sol, seed, true);
  const auto trend = pekar::evaluate_hamiltonian_trend(set, sol);
  const auto law_sec = pekar::verify_shift_law(set, sol, m.verify, pekar::derive_seed(seed, 1 << 20));
  const auto law = pekar::evaluate_shift_law(law_sec, m.verify);
  const auto endpoint = pekar::verify_endpoint(set, sol, m.verify, pekar::derive_seed(seed, 2 << 20));
  const auto tube = pekar::verify_tube(set, sol, m.sampler, m.verify, pekar::derive_seed(seed, 3 << 20));
  fs::create_directories(c.out);
  pekar::write_json(fs::path(c.out) / "verify.json", {{"schema_version", pekar::kReportSchemaVersion},
                                                       {"version", pekar::version_string()},
                                                       {"seed", seed},
                                                       {"criteria", {pekar::to_json(trend), pekar::to_json(law)}},
                                                       {"shift_law", law_sec.to_json()},
                                                       {"endpoint", endpoint.to_json()},
                                                       {"tube", tube.to_json()}});
  std::cout << trend.line() << '\n' << law.line() << '\n';
  return trend.passed && law.passed ? 0 : 1;
}

int cmd_run_all(const Common& c) {
  const auto m = master(c);
  const auto rep = pekar::run_all(m, c.out);
  for (const auto& r : rep.criteria) std::cout << r.line() << '\n';
  std::cout << "report: " << (fs::path(c.out) / "report.json").string() << '\n';
  return rep.all_passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pekar variational problem, mean-field path sampler and Pekar process"};
  app.set_version_flag("--version", std::string(pekar::version_string()));
  app.require_subcommand(1);

  Common common;
  std::optional<double> rmax, tol, mixing, eta;
  std::optional<std::size_t> n;
  std::string measure, grid_spec = "auto";

  auto* solve = app.add_subcommand("solve", "Solve the Pekar problem and write solution.json/csv");
  add_common(solve, common);
  solve->add_option("--rmax", rmax, "Radial cutoff");
  solve->add_option("--n", n, "Grid intervals");
  solve->add_option("--tol", tol, "Convergence tolerance on lambda");
  solve->add_option("--mixing", mixing, "Potential mixing in (0, 1]");

  auto* coulomb = app.add_subcommand("coulomb", "Coulomb functionals of a measure (or the engine self-check)");
  add_common(coulomb, common);
  coulomb->add_option("--measure", measure, "CSV x,y,z,w; softening read from a .json sidecar if present")
      ->check(CLI::ExistingFile);
  coulomb->add_option("--eval-grid", grid_spec, "'auto' or cx,cy,cz,nx,ny,nz,spacing");
  coulomb->add_option("--eta", eta, "Softening length (overrides the sidecar)");
  coulomb->add_option("--solution", common.solution, "Directory with solution.json/csv");

  auto* sample = app.add_subcommand("sample", "Run one Metropolis-Hastings chain");
  add_common(sample, common);
  sample->add_option("--solution", common.solution, "Directory with solution.json/csv");

  auto* sde = app.add_subcommand("sde", "Simulate the tilted diffusion and compare with its stationary law");
  add_common(sde, common);
  sde->add_option("--solution", common.solution, "Directory with solution.json/csv");

  auto* fe = app.add_subcommand("free-energy", "Thermodynamic integration over the beta ladder");
  add_common(fe, common);
  fe->add_option("--solution", common.solution, "Directory with solution.json/csv");

  auto* verify = app.add_subcommand("verify", "Chains over the t grid plus the law, endpoint and tube sections");
  add_common(verify, common);
  verify->add_option("--solution", common.solution, "Directory with solution.json/csv");

  auto* all = app.add_subcommand("run-all", "Every section, all artifacts and report.json");
  add_common(all, common);

  CLI11_PARSE(app, argc, argv);

  try {
    apply_threads(common);
    if (*solve) return cmd_solve(common, rmax, n, tol, mixing);
    if (*coulomb) return cmd_coulomb(common, measure, grid_spec, eta);
    if (*sample) return cmd_sample(common);
    if (*sde) return cmd_sde(common);
    if (*fe) return cmd_free_energy(common);
    if (*verify) return cmd_verify(common);
    if (*all) return cmd_run_all(common);
  } catch (const pekar::ConfigError& e) {
    std::cerr << "pekar: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "pekar: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
