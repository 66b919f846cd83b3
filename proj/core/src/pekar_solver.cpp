#include "pekar/pekar_solver.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace pekar {

namespace {

constexpr double kFourPi = 4.0 * M_PI;

// 4 pi h sum u_i^2 with u = r psi; trapezoid on {0} U nodes where u(0) = 0.
double discrete_norm(const RadialFunction& psi) {
  const auto& g = psi.grid();
  double s = 0.0;
  for (std::size_t i = 0; i < psi.size(); ++i) {
    const double u = g.node(i) * psi[i];
    s += u * u;
  }
  // the last node carries half weight in the trapezoid rule
  const double u_last = g.r_max() * psi[psi.size() - 1];
  s -= 0.5 * u_last * u_last;
  return kFourPi * g.dr() * s;
}

RadialFunction squared(const RadialFunction& f) {
  std::vector<double> v(f.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f[i] * f[i];
  return RadialFunction(f.grid(), std::move(v), Parity::even);
}

RadialFunction scaled(const RadialFunction& f, double a) {
  std::vector<double> v(f.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a * f[i];
  return RadialFunction(f.grid(), std::move(v), f.parity());
}

// Number of eigenvalues of the symmetric tridiagonal (d, off) below x.
std::size_t sturm_count(const std::vector<double>& d, double off2, double x) {
  std::size_t count = 0;
  double q = 1.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    q = d[i] - x - (i == 0 ? 0.0 : off2 / q);
    if (q == 0.0) q = -1e-300;
    if (q < 0.0) ++count;
  }
  return count;
}

}  // namespace

RadialFunction gaussian_psi(const RadialGrid& grid, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_psi: sigma must be positive");
  const double a = std::pow(M_PI * sigma * sigma, -0.75);
  return RadialFunction::from(
      grid, [&](double r) { return a * std::exp(-r * r / (2.0 * sigma * sigma)); }, Parity::even);
}

double GaussianTrial::coulomb_energy(double sigma) { return std::sqrt(2.0 / M_PI) / sigma; }
double GaussianTrial::dirichlet(double sigma) { return 3.0 / (4.0 * sigma * sigma); }
double GaussianTrial::optimal_sigma() { return 3.0 * std::sqrt(M_PI) / (2.0 * std::sqrt(2.0)); }
double GaussianTrial::optimal_value() { return 2.0 / (3.0 * M_PI); }

RadialFunction newton_potential(const RadialFunction& density) {
  const auto& g = density.grid();
  const std::size_t n = g.size();
  const double h = g.dr();
  for (std::size_t i = 0; i < n; ++i) {
    if (density[i] < 0.0) {
      std::ostringstream msg;
      msg << "newton_potential: negative density " << density[i] << " at r = " << g.node(i);
      throw std::invalid_argument(msg.str());
    }
  }
  RadialFunction rho = density;
  rho.set_parity(Parity::even);
  const RadialFunction drho = radial_derivative(rho);
  const double rho0 = rho.value_at_origin();

  // inner(r) = int_0^r s^2 rho, outer(r) = int_0^r s rho
  std::vector<double> inner(n);
  std::vector<double> outer(n);
  double acc_in = 0.0;
  double acc_out = 0.0;
  double prev_in = 0.0;
  double prev_out = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = g.node(i);
    const double f_in = r * r * rho[i];
    const double f_out = r * rho[i];
    acc_in += 0.5 * h * (prev_in + f_in);
    acc_out += 0.5 * h * (prev_out + f_out);
    prev_in = f_in;
    prev_out = f_out;
    // Euler-Maclaurin: trapezoid - h^2/12 (f'(b) - f'(a))
    const double dfin = 2.0 * r * rho[i] + r * r * drho[i];
    const double dfout = rho[i] + r * drho[i];
    inner[i] = acc_in - h * h / 12.0 * dfin;
    outer[i] = acc_out - h * h / 12.0 * (dfout - rho0);
  }
  const double outer_total = outer[n - 1];
  std::vector<double> lam(n);
  for (std::size_t i = 0; i < n; ++i) {
    lam[i] = kFourPi * (inner[i] / g.node(i) + (outer_total - outer[i]));
  }
  return RadialFunction(g, std::move(lam), Parity::even);
}

GroundState ground_state(const RadialFunction& potential) {
  const auto& g = potential.grid();
  const std::size_t n = g.size();
  const double h = g.dr();
  for (std::size_t i = 0; i < n; ++i) {
    if (potential[i] < 0.0) {
      std::ostringstream msg;
      msg << "ground_state: potential must be attractive (>= 0); got " << potential[i]
          << " at r = " << g.node(i);
      throw std::invalid_argument(msg.str());
    }
  }

  // unknowns u at nodes 0..n-2; u(r_max) = 0
  const std::size_t m = n - 1;
  const double inv_h2 = 1.0 / (h * h);
  std::vector<double> d(m);
  for (std::size_t i = 0; i < m; ++i) d[i] = 2.0 * inv_h2 - potential[i];
  const double off = -inv_h2;
  const double off2 = off * off;

  double lo = *std::min_element(d.begin(), d.end()) - 2.0 * inv_h2;
  double hi = *std::max_element(d.begin(), d.end()) + 2.0 * inv_h2;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (sturm_count(d, off2, mid) >= 1) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  const double e0 = 0.5 * (lo + hi);

  // shifted inverse iteration, Thomas algorithm on the SPD matrix A - shift
  const double scale = std::max(1.0, std::abs(e0));
  const double shift = e0 - 1e-9 * scale;
  std::vector<double> v(m, 1.0);
  std::vector<double> w(m);
  std::vector<double> c(m);
  std::size_t it = 0;
  double change = std::numeric_limits<double>::infinity();
  constexpr std::size_t kMaxInverse = 50;
  for (it = 1; it <= kMaxInverse; ++it) {
    // forward sweep
    double denom = d[0] - shift;
    c[0] = off / denom;
    w[0] = v[0] / denom;
    for (std::size_t i = 1; i < m; ++i) {
      denom = d[i] - shift - off * c[i - 1];
      c[i] = off / denom;
      w[i] = (v[i] - off * w[i - 1]) / denom;
    }
    for (std::size_t i = m - 1; i-- > 0;) w[i] -= c[i] * w[i + 1];
    double wmax = 0.0;
    for (double x : w) wmax = std::max(wmax, std::abs(x));
    const double sgn = (w[0] < 0.0) ? -1.0 : 1.0;
    change = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double nv = sgn * w[i] / wmax;
      change = std::max(change, std::abs(nv - v[i]));
      v[i] = nv;
    }
    if (change < 1e-13) break;
  }
  if (change >= 1e-13) {
    std::ostringstream msg;
    msg << "ground_state: inverse iteration did not converge after " << kMaxInverse
        << " iterations (last sup change " << change << ", eigenvalue " << e0 << ")";
    throw EigenSolverError(msg.str(), kMaxInverse, change);
  }

  std::vector<double> psi(n, 0.0);
  double vmax = 0.0;
  for (double x : v) vmax = std::max(vmax, x);
  for (std::size_t i = 0; i < m; ++i) {
    double u = v[i];
    if (u < 0.0) {
      if (u < -1e-10 * vmax) {
        std::ostringstream msg;
        msg << "ground_state: eigenvector has a node near r = " << g.node(i);
        throw EigenSolverError(msg.str(), it, change);
      }
      u = 0.0;
    }
    psi[i] = u / g.node(i);
  }
  RadialFunction out(g, std::move(psi), Parity::even);
  out = scaled(out, 1.0 / std::sqrt(discrete_norm(out)));
  return GroundState{e0, std::move(out), it};
}

Energy energy(const RadialFunction& psi) {
  const double nrm = discrete_norm(psi);
  if (std::abs(nrm - 1.0) > 1e-6) {
    std::ostringstream msg;
    msg << "energy: psi is not normalized (4 pi int r^2 psi^2 = " << nrm << ")";
    throw std::invalid_argument(msg.str());
  }
  const auto& g = psi.grid();
  const double h = g.dr();
  const RadialFunction lam = newton_potential(squared(psi));
  double hsum = 0.0;
  double dsum = 0.0;
  double u_prev = 0.0;
  for (std::size_t i = 0; i < psi.size(); ++i) {
    const double u = g.node(i) * psi[i];
    const double w = (i + 1 == psi.size()) ? 0.5 : 1.0;
    hsum += w * u * u * lam[i];
    dsum += (u - u_prev) * (u - u_prev);
    u_prev = u;
  }
  Energy e;
  e.coulomb = kFourPi * h * hsum;
  e.dirichlet = 0.5 * kFourPi * dsum / h;
  e.value = e.coulomb - e.dirichlet;
  return e;
}

void ScfConfig::validate() const {
  if (!(mixing > 0.0 && mixing <= 1.0)) throw std::invalid_argument("ScfConfig: mixing must lie in (0, 1]");
  if (!(tol >= 1e-12)) throw std::invalid_argument("ScfConfig: tol must be >= 1e-12");
  if (max_iter == 0) throw std::invalid_argument("ScfConfig: max_iter must be positive");
  if (grid.size() < kMinGridNodes || !(grid.r_max() > 0.0)) {
    throw std::invalid_argument("ScfConfig: invalid grid");
  }
}

double PekarSolution::decay_rate() const { return std::sqrt(lambda); }

double PekarSolution::tail_radius() const {
  const double r_max = grid().r_max();
  return std::max(0.5 * r_max, r_max - 5.0 / decay_rate());
}

double PekarSolution::potential_at(double r) const {
  if (r <= grid().r_max()) return interpolate(potential, r);
  return 1.0 / r;
}

double PekarSolution::log_psi_at(double r) const {
  const double rt = tail_radius();
  if (r <= rt) return std::log(interpolate(psi0, r));
  return std::log(interpolate(psi0, rt)) - decay_rate() * (r - rt);
}

double PekarSolution::psi_at(double r) const { return std::exp(log_psi_at(r)); }

double PekarSolution::drift_at(double r, bool* far_field) const {
  if (far_field) *far_field = false;
  if (r < grid().dr()) return 0.0;
  if (r > tail_radius()) {
    if (far_field) *far_field = true;
    return -decay_rate();
  }
  return interpolate(drift, r);
}

DriftProfile drift_profile(const RadialFunction& psi) {
  // central differences of log psi: exact for Gaussians, no ratio of small numbers in the tail
  const std::size_t n = psi.size();
  std::size_t usable = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(psi[i] >= 1e-300)) {
      usable = i;
      break;
    }
  }
  if (usable < 3) throw std::invalid_argument("drift_profile: psi vanishes near the origin");
  std::vector<double> logp(n);
  for (std::size_t i = 0; i < usable; ++i) logp[i] = std::log(psi[i]);
  for (std::size_t i = usable; i < n; ++i) logp[i] = logp[usable - 1];
  const RadialFunction d = radial_derivative(RadialFunction(psi.grid(), std::move(logp), Parity::even));
  std::vector<double> b(d.values().begin(), d.values().end());
  // past the last usable node, keep the last interior slope
  if (usable < n) {
    for (std::size_t i = usable - 1; i < n; ++i) b[i] = b[usable - 2];
  }
  return DriftProfile{RadialFunction(psi.grid(), std::move(b), Parity::odd), n - usable};
}

DriftProfile drift_profile(const PekarSolution& sol) { return drift_profile(sol.psi0); }

RadialFunction laplacian_ratio_fd(const RadialFunction& psi) {
  const auto& g = psi.grid();
  const std::size_t n = psi.size();
  const double h = g.dr();
  std::vector<double> out(n);
  auto u = [&](std::ptrdiff_t i) -> double {
    if (i < 0) return 0.0;
    if (static_cast<std::size_t>(i) >= n) return 0.0;
    return g.node(static_cast<std::size_t>(i)) * psi[static_cast<std::size_t>(i)];
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::ptrdiff_t>(i);
    const double ui = u(k);
    if (std::abs(ui) < 1e-300) {
      out[i] = i > 0 ? out[i - 1] : 0.0;
      continue;
    }
    out[i] = (u(k + 1) - 2.0 * ui + u(k - 1)) / (h * h * ui);
  }
  return RadialFunction(g, std::move(out), Parity::even);
}

double el_residual(const RadialFunction& psi, const RadialFunction& coulomb_potential, double lambda,
                   double cutoff) {
  const RadialFunction lap = laplacian_ratio_fd(psi);
  const double threshold = cutoff * psi.value_at_origin();
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < psi.size(); ++i) {
    if (psi[i] <= threshold) continue;
    worst = std::max(worst, std::abs(lap[i] + 4.0 * coulomb_potential[i] - lambda));
  }
  return worst;
}

PekarSolution scf_iterate(const ScfConfig& config, const std::optional<RadialFunction>& init) {
  config.validate();
  const RadialGrid& grid = config.grid;

  RadialFunction density;
  if (init) {
    if (!(init->grid() == grid)) throw std::invalid_argument("scf_iterate: init lives on a different grid");
    density = *init;
    density.set_parity(Parity::even);
    const double mass = integrate_3d(density);
    if (std::abs(mass - 1.0) > 1e-6) throw std::invalid_argument("scf_iterate: init density is not normalized");
  } else {
    density = squared(gaussian_psi(grid, GaussianTrial::optimal_sigma()));
  }

  std::vector<ScfIterationRecord> history;
  GroundState gs;
  bool converged = false;
  for (std::size_t k = 0; k < config.max_iter; ++k) {
    const RadialFunction v = scaled(newton_potential(density), 4.0);
    gs = ground_state(v);
    const RadialFunction fresh = squared(gs.psi);

    double change = 0.0;
    std::vector<double> mixed(grid.size());
    for (std::size_t i = 0; i < mixed.size(); ++i) {
      change = std::max(change, std::abs(fresh[i] - density[i]));
      mixed[i] = (1.0 - config.mixing) * density[i] + config.mixing * fresh[i];
    }
    density = RadialFunction(grid, std::move(mixed), Parity::even);

    ScfIterationRecord rec;
    rec.density_change = change;
    rec.value = energy(gs.psi).value;
    rec.mass = integrate_3d(density);
    history.push_back(rec);
    if (change < config.tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "scf_iterate: no convergence after " << config.max_iter << " iterations (last density change "
        << (history.empty() ? 0.0 : history.back().density_change) << ")";
    throw ScfError(msg.str(), density, std::move(history));
  }

  PekarSolution sol;
  sol.psi0 = gs.psi;
  sol.potential = newton_potential(squared(sol.psi0));
  const Energy e = energy(sol.psi0);
  sol.coulomb_energy = e.coulomb;
  sol.dirichlet = e.dirichlet;
  sol.rho = e.value;
  sol.lambda = 4.0 * e.coulomb - 2.0 * e.dirichlet;
  sol.eigenvalue_gap = std::abs(sol.lambda + gs.eigenvalue);
  sol.residual = el_residual(sol.psi0, sol.potential, sol.lambda);
  const DriftProfile dp = drift_profile(sol.psi0);
  sol.drift = dp.drift;
  sol.drift_clamped_nodes = dp.clamped_nodes;
  sol.iterations = history.size();
  sol.history = std::move(history);
  return sol;
}

RadialFunction self_convolution(const RadialFunction& f, double r_out, std::size_t n_out) {
  const auto& g = f.grid();
  const double h = g.dr();
  const std::size_t n = g.size();
  const double ratio = r_out / static_cast<double>(n_out) / h;
  const auto step = static_cast<std::size_t>(std::llround(ratio));
  if (step == 0 || std::abs(ratio - static_cast<double>(step)) > 1e-9) {
    throw std::invalid_argument("self_convolution: output spacing must be a multiple of the grid spacing");
  }
  RadialFunction fe = f;
  fe.set_parity(Parity::even);
  const RadialFunction df = radial_derivative(fe);
  const double f0 = fe.value_at_origin();

  // G(j h) = int_0^{jh} v f(v) dv with Euler-Maclaurin end correction
  std::vector<double> G(n + 1, 0.0);
  double acc = 0.0;
  double prev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = g.node(i);
    const double v = r * f[i];
    acc += 0.5 * h * (prev + v);
    prev = v;
    G[i + 1] = acc - h * h / 12.0 * ((f[i] + r * df[i]) - f0);
  }
  auto G_at = [&](std::size_t j) { return G[std::min(j, n)]; };

  std::vector<double> out(n_out);
  for (std::size_t k = 0; k < n_out; ++k) {
    const std::size_t jr = (k + 1) * step;
    const double r = static_cast<double>(jr) * h;
    std::vector<double> integrand(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t js = i + 1;
      const std::size_t jd = jr > js ? jr - js : js - jr;
      integrand[i] = f[i] * (G_at(jr + js) - G_at(jd));
    }
    // s f(s) [..] = s * integrand; integrate_radial with power 1
    const RadialFunction inner(g, std::move(integrand), Parity::none);
    out[k] = 2.0 * M_PI / r * integrate_radial(inner, 1);
  }
  return RadialFunction(RadialGrid(r_out, n_out), std::move(out), Parity::even);
}

nlohmann::json to_json(const PekarSolution& sol) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["lambda"] = sol.lambda;
  j["rho"] = sol.rho;
  j["coulomb_energy"] = sol.coulomb_energy;
  j["dirichlet"] = sol.dirichlet;
  j["residual"] = sol.residual;
  j["virial_gap"] = sol.virial_gap();
  j["eigenvalue_gap"] = sol.eigenvalue_gap;
  j["iterations"] = sol.iterations;
  j["drift_clamped_nodes"] = sol.drift_clamped_nodes;
  j["grid"] = {{"r_max", sol.grid().r_max()}, {"n", sol.grid().size()}, {"dr", sol.grid().dr()}};
  return j;
}

void write_solution_csv(std::ostream& os, const PekarSolution& sol) {
  os << "r,psi0,potential,drift\n" << std::setprecision(17);
  for (std::size_t i = 0; i < sol.psi0.size(); ++i) {
    os << sol.grid().node(i) << ',' << sol.psi0[i] << ',' << sol.potential[i] << ',' << sol.drift[i] << '\n';
  }
}

PekarSolution load_solution(const nlohmann::json& summary, std::istream& csv) {
  const auto grid = make_grid(summary.at("grid").at("r_max").get<double>(),
                              summary.at("grid").at("n").get<std::size_t>());
  std::string line;
  if (!std::getline(csv, line) || line.rfind("r,psi0,potential,drift", 0) != 0) {
    throw std::invalid_argument("load_solution: unexpected CSV header");
  }
  std::vector<double> psi;
  std::vector<double> pot;
  std::vector<double> drift;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    double vals[4];
    for (double& x : vals) {
      if (!std::getline(row, cell, ',')) throw std::invalid_argument("load_solution: short CSV row");
      x = std::stod(cell);
    }
    psi.push_back(vals[1]);
    pot.push_back(vals[2]);
    drift.push_back(vals[3]);
  }
  PekarSolution sol;
  sol.psi0 = RadialFunction(grid, std::move(psi), Parity::even);
  sol.potential = RadialFunction(grid, std::move(pot), Parity::even);
  sol.drift = RadialFunction(grid, std::move(drift), Parity::odd);
  sol.lambda = summary.at("lambda").get<double>();
  sol.rho = summary.at("rho").get<double>();
  sol.coulomb_energy = summary.at("coulomb_energy").get<double>();
  sol.dirichlet = summary.at("dirichlet").get<double>();
  sol.residual = summary.at("residual").get<double>();
  sol.eigenvalue_gap = summary.value("eigenvalue_gap", 0.0);
  sol.iterations = summary.value("iterations", std::size_t{0});
  sol.drift_clamped_nodes = summary.value("drift_clamped_nodes", std::size_t{0});
  return sol;
}

}  // namespace pekar
