#include "pekar/gibbs_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "pekar/parallel.hpp"
#include "pekar/stats.hpp"

namespace pekar {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

double log_gauss3(const Vec3& d, double var) {
  return -1.5 * std::log(2.0 * M_PI * var) - norm2(d) / (2.0 * var);
}

}  // namespace

const char* move_name(MoveType m) {
  switch (m) {
    case MoveType::bridge: return "bridge";
    case MoveType::endpoint: return "endpoint";
    case MoveType::translate: return "translate";
  }
  return "?";
}

void MoveMix::validate() const {
  require(bridge >= 0 && endpoint >= 0 && translate >= 0, "move mix: negative probability");
  require(bridge + endpoint > 0, "move mix: bridge and endpoint moves both disabled");
  require(mean_segment_fraction > 0 && mean_segment_fraction <= 1, "move mix: mean_segment_fraction must be in (0, 1]");
  require(translate_scale > 0, "move mix: translate_scale must be positive");
}

void ChainConfig::validate() const {
  require(t > 0 && h > 0, "chain: t and h must be positive");
  require(steps() >= 2, "chain: need at least two steps");
  require(beta >= 0 && beta <= 1, "chain: beta must lie in [0, 1]");
  require(softening_scale > 0 && softening() < 1.0, "chain: softening must lie in (0, 1)");
  require(burn_in > 0 && draws > 0, "chain: burn-in and draws must be positive");
  require(thinning > 0 && checkpoint_interval > 0, "chain: thinning and checkpoint interval must be positive");
  moves.validate();
}

nlohmann::json to_json(const ChainConfig& c) {
  return {{"t", c.t},
          {"h", c.h},
          {"beta", c.beta},
          {"softening_scale", c.softening_scale},
          {"burn_in", c.burn_in},
          {"draws", c.draws},
          {"thinning", c.thinning},
          {"checkpoint_interval", c.checkpoint_interval},
          {"origin_start", c.origin_start},
          {"record_shift", c.record_shift},
          {"moves",
           {{"bridge", c.moves.bridge},
            {"endpoint", c.moves.endpoint},
            {"translate", c.moves.translate},
            {"mean_segment_fraction", c.moves.mean_segment_fraction},
            {"translate_scale", c.moves.translate_scale}}},
          {"shift_search",
           {{"margin", c.shift.margin},
            {"grid_budget", c.shift.grid_budget},
            {"coarse_per_axis", c.shift.coarse_per_axis},
            {"refinements", c.shift.refinements}}}};
}

ChainConfig chain_config_from_json(const nlohmann::json& j, ChainConfig c) {
  c.t = j.value("t", c.t);
  c.h = j.value("h", c.h);
  c.beta = j.value("beta", c.beta);
  c.softening_scale = j.value("softening_scale", c.softening_scale);
  c.burn_in = j.value("burn_in", c.burn_in);
  c.draws = j.value("draws", c.draws);
  c.thinning = j.value("thinning", c.thinning);
  c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
  c.origin_start = j.value("origin_start", c.origin_start);
  c.record_shift = j.value("record_shift", c.record_shift);
  if (j.contains("moves")) {
    const auto& m = j.at("moves");
    c.moves.bridge = m.value("bridge", c.moves.bridge);
    c.moves.endpoint = m.value("endpoint", c.moves.endpoint);
    c.moves.translate = m.value("translate", c.moves.translate);
    c.moves.mean_segment_fraction = m.value("mean_segment_fraction", c.moves.mean_segment_fraction);
    c.moves.translate_scale = m.value("translate_scale", c.moves.translate_scale);
  }
  if (j.contains("shift_search")) {
    const auto& s = j.at("shift_search");
    c.shift.margin = s.value("margin", c.shift.margin);
    c.shift.grid_budget = s.value("grid_budget", c.shift.grid_budget);
    c.shift.coarse_per_axis = s.value("coarse_per_axis", c.shift.coarse_per_axis);
    c.shift.refinements = s.value("refinements", c.shift.refinements);
  }
  return c;
}

double MoveStats::rate(MoveType m) const {
  const auto i = static_cast<std::size_t>(m);
  return proposed[i] == 0 ? 0.0 : static_cast<double>(accepted[i]) / static_cast<double>(proposed[i]);
}

CacheDivergence::CacheDivergence(std::uint64_t step, double deviation)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "incremental H cache diverged by " << deviation << " at step " << step;
        return os.str();
      }()),
      step_(step),
      deviation_(deviation) {}

// ---------------------------------------------------------------------------

PointColumns::PointColumns(std::span<const Vec3> pts) : x(pts.size()), y(pts.size()), z(pts.size()) {
  for (std::size_t i = 0; i < pts.size(); ++i) set(i, pts[i]);
}

double kernel_sum(const PointColumns& q, std::size_t lo, std::size_t hi, const Vec3& p, double eta2) {
  const double* qx = q.x.data();
  const double* qy = q.y.data();
  const double* qz = q.z.data();
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t l = lo;
  for (; l + 4 <= hi; l += 4) {
    for (std::size_t s = 0; s < 4; ++s) {
      const double dx = p.x - qx[l + s];
      const double dy = p.y - qy[l + s];
      const double dz = p.z - qz[l + s];
      acc[s] += 1.0 / std::sqrt(dx * dx + dy * dy + dz * dz + eta2);
    }
  }
  for (std::size_t s = 0; l < hi; ++l, ++s) {
    const double dx = p.x - qx[l];
    const double dy = p.y - qy[l];
    const double dz = p.z - qz[l];
    acc[s] += 1.0 / std::sqrt(dx * dx + dy * dy + dz * dz + eta2);
  }
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

ChainState::ChainState(DiscretePath path, double beta, double softening)
    : path_(std::move(path)), beta_(beta), kernel_{softening} {
  require(softening > 0, "ChainState: softening must be positive");
  require(path_.steps() >= 1, "ChainState: path needs at least one step");
  mids_ = PointColumns(midpoints(path_));
  rebuild_rows();
}

void ChainState::rebuild_rows() {
  const std::size_t m = mids_.size();
  rows_.assign(m, 0.0);
  const double eta2 = kernel_.eta * kernel_.eta;
  for (std::size_t k = 0; k < m; ++k) rows_[k] = kernel_sum(mids_, 0, m, mids_[k], eta2);
  CompensatedSum total;
  for (double r : rows_) total.add(r);
  h_ = total.value() / (static_cast<double>(m) * static_cast<double>(m));
}

double ChainState::recompute() const { return pekar::hamiltonian(occupation_of(path_, kernel_.eta)); }

double ChainState::checkpoint() {
  const double dev = std::abs(h_ - recompute());
  ++checkpoints_;
  max_deviation_ = std::max(max_deviation_, dev);
  if (!(dev <= 1e-6)) throw CacheDivergence(steps_, dev);
  rebuild_rows();
  return dev;
}

std::vector<Vec3> ChainState::changed_midpoints(const Proposal& p, std::size_t& lo, std::size_t& hi) const {
  // positions first+1 .. first+len change, with len = positions.size()
  lo = p.first;
  hi = std::min(mids_.size(), p.first + p.positions.size() + 1);
  auto pos = [&](std::size_t k) -> const Vec3& {
    return (k > p.first && k <= p.first + p.positions.size()) ? p.positions[k - p.first - 1] : path_.positions[k];
  };
  std::vector<Vec3> out(hi - lo);
  for (std::size_t k = lo; k < hi; ++k) out[k - lo] = 0.5 * (pos(k) + pos(k + 1));
  return out;
}

void ChainState::evaluate(Proposal& p) const {
  if (p.type == MoveType::translate) {
    p.new_rows.clear();
    p.delta_h = 0.0;
    return;
  }
  std::size_t lo = 0, hi = 0;
  const PointColumns fresh(changed_midpoints(p, lo, hi));
  const std::size_t m = mids_.size();
  const std::size_t a = hi - lo;
  const double eta2 = kernel_.eta * kernel_.eta;
  p.new_rows.assign(a, 0.0);
  double row_change = 0.0;
  double block_new = 0.0;
  double block_old = 0.0;
  for (std::size_t q = 0; q < a; ++q) {
    const Vec3 x = fresh[q];
    const double outside = kernel_sum(mids_, 0, lo, x, eta2) + kernel_sum(mids_, hi, m, x, eta2);
    const double inside = kernel_sum(fresh, 0, a, x, eta2);
    const double inside_old = kernel_sum(mids_, lo, hi, mids_[lo + q], eta2);
    p.new_rows[q] = outside + inside;
    row_change += p.new_rows[q] - rows_[lo + q];
    block_new += inside;
    block_old += inside_old;
  }
  const double m2 = static_cast<double>(m) * static_cast<double>(m);
  p.delta_h = (2.0 * row_change - (block_new - block_old)) / m2;
}

void ChainState::apply(Proposal&& p) {
  if (p.type == MoveType::translate) {
    for (auto& x : path_.positions) x += p.shift;
    for (std::size_t k = 0; k < mids_.size(); ++k) mids_.set(k, mids_[k] + p.shift);
    return;
  }
  std::size_t lo = 0, hi = 0;
  const PointColumns fresh(changed_midpoints(p, lo, hi));
  const std::size_t m = mids_.size();
  const double eta2 = kernel_.eta * kernel_.eta;
  auto update = [&](std::size_t l) {
    const Vec3 x = mids_[l];
    rows_[l] += kernel_sum(fresh, 0, fresh.size(), x, eta2) - kernel_sum(mids_, lo, hi, x, eta2);
  };
  for (std::size_t l = 0; l < lo; ++l) update(l);
  for (std::size_t l = hi; l < m; ++l) update(l);
  for (std::size_t q = 0; q < fresh.size(); ++q) {
    rows_[lo + q] = p.new_rows[q];
    mids_.set(lo + q, fresh[q]);
  }
  for (std::size_t q = 0; q < p.positions.size(); ++q) path_.positions[p.first + 1 + q] = p.positions[q];
  CompensatedSum total;
  for (double r : rows_) total.add(r);
  h_ = total.value() / (static_cast<double>(m) * static_cast<double>(m));
}

void ChainState::count(MoveType m, bool accepted) {
  const auto i = static_cast<std::size_t>(m);
  ++stats_.proposed[i];
  if (accepted) ++stats_.accepted[i];
}

void ChainState::swap_configuration(ChainState& other) {
  require(path_.steps() == other.path_.steps() && kernel_.eta == other.kernel_.eta,
          "swap_configuration: states are not compatible");
  std::swap(path_, other.path_);
  std::swap(mids_, other.mids_);
  std::swap(rows_, other.rows_);
  std::swap(h_, other.h_);
}

double detailed_balance_defect(const ChainState& state, const Proposal& p, const MoveMix& mix) {
  const DiscretePath& x = state.path();
  const double bt = state.beta() * state.horizon();
  const double dh = p.delta_h;
  // Metropolis terms: beta t H(x) + log a(x,y) - beta t H(y) - log a(y,x)
  const double tilt = -bt * dh + std::min(0.0, bt * dh) - std::min(0.0, -bt * dh);
  if (p.type == MoveType::translate) {
    const double var = mix.translate_scale * mix.translate_scale;
    return tilt + log_gauss3(p.shift, var) - log_gauss3(-1.0 * p.shift, var);
  }
  std::vector<Vec3> y(x.positions.begin(), x.positions.end());
  for (std::size_t q = 0; q < p.positions.size(); ++q) y[p.first + 1 + q] = p.positions[q];
  const std::size_t i = p.first;
  const std::size_t j = std::min(p.last, x.steps());
  const double wx = log_wiener_segment(x.positions, x.h, i, j);
  const double wy = log_wiener_segment(y, x.h, i, j);
  double qxy = 0.0, qyx = 0.0;
  if (p.type == MoveType::bridge) {
    qxy = log_bridge_density(y, x.h, i, j);
    qyx = log_bridge_density(x.positions, x.h, i, j);
  } else {
    qxy = wy;
    qyx = wx;
  }
  return tilt + (wx + qxy) - (wy + qyx);
}

bool mh_step(ChainState& state, const ChainConfig& config, std::mt19937_64& rng) {
  const MoveType type = draw_move(config.moves, config.origin_start, rng);
  Proposal p = state.propose(type, config.moves, rng);
  state.evaluate(p);
  const double la = state.log_acceptance(p);
  bool accept = la >= 0.0;
  if (!accept) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    accept = u(rng) < std::exp(la);
  }
  if (accept) state.apply(std::move(p));
  state.count(type, accept);
  state.tick();
  if (state.steps_taken() % config.checkpoint_interval == 0) state.checkpoint();
  return accept;
}

// ---------------------------------------------------------------------------

std::vector<double> ChainOutput::hamiltonians() const {
  std::vector<double> v;
  v.reserve(samples.size());
  for (const auto& s : samples) v.push_back(s.hamiltonian);
  return v;
}

std::vector<double> ChainOutput::shift_radii() const {
  std::vector<double> v;
  v.reserve(samples.size());
  for (const auto& s : samples) v.push_back(norm(s.shift));
  return v;
}

std::vector<double> ChainOutput::endpoint_radii() const {
  std::vector<double> v;
  v.reserve(samples.size());
  for (const auto& s : samples) v.push_back(norm(s.endpoint));
  return v;
}

std::vector<double> ChainOutput::orbit_distances() const {
  std::vector<double> v;
  v.reserve(samples.size());
  for (const auto& s : samples) v.push_back(s.orbit_distance);
  return v;
}

namespace {

struct Replica {
  ChainState state;
  std::mt19937_64 rng;
  ChainOutput out;
};

ChainSample record(const ChainState& s, const ChainConfig& c, const PekarSolution* sol) {
  ChainSample r;
  r.step = s.steps_taken();
  r.hamiltonian = s.hamiltonian();
  r.endpoint = s.path().endpoint();
  if (c.record_shift) {
    const auto mu = occupation_of(s.path(), s.softening());
    const auto found = best_shift(mu, *sol, c.shift);
    r.shift = found.shift;
    r.orbit_distance = found.distance;
  }
  return r;
}

/// Advances a replica by n steps, recording every thinning-th step after burn-in.
void advance(Replica& rep, const ChainConfig& c, const PekarSolution* sol, std::size_t n) {
  const std::uint64_t total = c.burn_in + c.draws * c.thinning;
  for (std::size_t k = 0; k < n && rep.state.steps_taken() < total; ++k) {
    mh_step(rep.state, c, rep.rng);
    const std::uint64_t s = rep.state.steps_taken();
    if (s > c.burn_in && (s - c.burn_in) % c.thinning == 0) rep.out.samples.push_back(record(rep.state, c, sol));
  }
}

Replica make_replica(const ChainConfig& c, std::uint64_t seed) {
  DiscretePath path = sample_wiener(c.t, c.h, derive_seed(seed, 0));
  path.origin_start = c.origin_start;
  Replica rep{ChainState(std::move(path), c.beta, c.softening()), std::mt19937_64(derive_seed(seed, 1)), {}};
  rep.out.config = c;
  rep.out.seed = seed;
  return rep;
}

void finish(Replica& rep) {
  rep.out.stats = rep.state.stats();
  rep.out.max_checkpoint_deviation = rep.state.max_checkpoint_deviation();
  rep.out.checkpoints = rep.state.checkpoints();
}

double overlap_estimate(const std::vector<double>& hk, const std::vector<double>& hk1, double t, double dbeta) {
  const std::size_t n = std::min(hk.size(), hk1.size());
  if (n == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::min(1.0, std::exp(t * dbeta * (hk[i] - hk1[i])));
  return s / static_cast<double>(n);
}

}  // namespace

ChainOutput run_chain(const ChainConfig& config, const PekarSolution* sol, std::uint64_t seed) {
  config.validate();
  require(!config.record_shift || sol != nullptr, "run_chain: shift statistics need a Pekar solution");
  Replica rep = make_replica(config, seed);
  advance(rep, config, sol, config.burn_in + config.draws * config.thinning);
  finish(rep);
  return std::move(rep.out);
}

void LadderConfig::validate() const {
  ChainConfig c = chain;
  c.beta = 0.0;
  c.validate();
  require(!betas.empty(), "ladder: empty beta grid");
  require(betas.front() == 0.0, "ladder: beta grid must start at 0");
  for (std::size_t k = 0; k < betas.size(); ++k) {
    require(betas[k] >= 0.0 && betas[k] <= 1.0, "ladder: beta outside [0, 1]");
    if (k > 0) require(betas[k] > betas[k - 1], "ladder: beta grid must be increasing");
  }
  require(betas.size() == 1 || betas.back() == 1.0, "ladder: beta grid must end at 1");
  require(swap_interval > 0, "ladder: swap_interval must be positive");
}

std::vector<double> default_beta_grid(std::size_t points) {
  require(points >= 2, "default_beta_grid: need at least two points");
  std::vector<double> b(points);
  const double n = static_cast<double>(points - 1);
  for (std::size_t k = 0; k < points; ++k) {
    const double s = 1.0 - static_cast<double>(k) / n;
    b[k] = 1.0 - s * s;
  }
  b.front() = 0.0;
  b.back() = 1.0;
  return b;
}

LadderOutput run_ladder(const LadderConfig& config, const PekarSolution* sol, std::uint64_t seed) {
  config.validate();
  require(!config.chain.record_shift || sol != nullptr, "run_ladder: shift statistics need a Pekar solution");
  const std::size_t n = config.betas.size();
  std::vector<Replica> reps;
  std::vector<ChainConfig> configs(n, config.chain);
  reps.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    configs[k].beta = config.betas[k];
    reps.push_back(make_replica(configs[k], derive_seed(seed, k)));
  }
  const bool exchange = config.replica_exchange && n > 1;
  const std::uint64_t total = config.chain.burn_in + config.chain.draws * config.chain.thinning;
  const std::size_t block = exchange ? config.swap_interval : static_cast<std::size_t>(total);
  std::vector<std::uint64_t> tried(n > 0 ? n - 1 : 0, 0), taken(n > 0 ? n - 1 : 0, 0);
  std::mt19937_64 swap_rng(derive_seed(seed, 0x5eedULL << 20));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::exception_ptr> errors(n);
  const double t = config.chain.t;

  for (std::size_t round = 0; reps.front().state.steps_taken() < total; ++round) {
    parallel_for(n, [&](std::size_t k) {
      try {
        advance(reps[k], configs[k], sol, block);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    if (!exchange) continue;
    for (std::size_t k = round % 2; k + 1 < n; k += 2) {
      const double la = t * (config.betas[k + 1] - config.betas[k]) *
                        (reps[k].state.hamiltonian() - reps[k + 1].state.hamiltonian());
      ++tried[k];
      const double r = u(swap_rng);
      if (la >= 0.0 || r < std::exp(la)) {
        ++taken[k];
        reps[k].state.swap_configuration(reps[k + 1].state);
      }
    }
  }

  LadderOutput out;
  for (auto& r : reps) {
    finish(r);
    out.chains.push_back(std::move(r.out));
  }
  for (std::size_t k = 0; k + 1 < n; ++k) {
    if (exchange) out.swap_rates.push_back(tried[k] ? static_cast<double>(taken[k]) / static_cast<double>(tried[k]) : 0.0);
    out.overlap.push_back(overlap_estimate(out.chains[k].hamiltonians(), out.chains[k + 1].hamiltonians(), t,
                                           config.betas[k + 1] - config.betas[k]));
    const double rate = exchange ? out.swap_rates.back() : out.overlap.back();
    out.flagged.push_back(rate < config.swap_threshold);
  }
  return out;
}

FreeEnergyEstimate integrate_ladder(double t, const std::vector<double>& betas, const std::vector<double>& means,
                                    const std::vector<double>& errors) {
  require(!betas.empty() && betas.size() == means.size() && means.size() == errors.size(),
          "integrate_ladder: mismatched inputs");
  FreeEnergyEstimate fe;
  fe.t = t;
  fe.betas = betas;
  fe.mean_h = means;
  fe.se_h = errors;
  if (betas.size() == 1) {
    fe.estimate = means[0];
    fe.standard_error = errors[0];
    return fe;
  }
  CompensatedSum sum;
  double var = 0.0;
  for (std::size_t k = 0; k < betas.size(); ++k) {
    const double left = k > 0 ? betas[k] - betas[k - 1] : 0.0;
    const double right = k + 1 < betas.size() ? betas[k + 1] - betas[k] : 0.0;
    const double w = 0.5 * (left + right);
    sum.add(w * means[k]);
    var += w * w * errors[k] * errors[k];
  }
  fe.estimate = sum.value();
  fe.standard_error = std::sqrt(var);
  for (std::size_t k = 0; k + 1 < betas.size(); ++k) {
    const double tol = 2.0 * std::hypot(errors[k], errors[k + 1]);
    if (means[k + 1] < means[k] - tol) fe.monotone = false;
  }
  return fe;
}

FreeEnergyEstimate free_energy_ti(const LadderConfig& config, std::uint64_t seed) {
  LadderConfig c = config;
  c.chain.record_shift = false;
  const auto ladder = run_ladder(c, nullptr, seed);
  std::vector<double> means, errors;
  for (const auto& ch : ladder.chains) {
    const auto hs = ch.hamiltonians();
    means.push_back(mean(hs));
    errors.push_back(mcmc_standard_error(hs));
  }
  auto fe = integrate_ladder(c.chain.t, c.betas, means, errors);
  fe.swap_rates = ladder.swap_rates;
  fe.overlap = ladder.overlap;
  fe.flagged = ladder.flagged;
  return fe;
}

double wiener_mean_hamiltonian(double t, double h, double softening) {
  const std::size_t m = step_count(t, h);
  require(softening > 0, "wiener_mean_hamiltonian: softening must be positive");
  // g(v) = E (|Z|^2 + eta^2)^{-1/2}, Z ~ N(0, v I_3); |Z| = sqrt(v) chi_3.
  constexpr std::size_t kNodes = 2400;
  constexpr double kUpper = 12.0;
  const double ds = kUpper / kNodes;
  const double c = std::sqrt(2.0 / M_PI);
  const double eta2 = softening * softening;
  auto g = [&](double v) {
    double s = 0.0;
    for (std::size_t i = 1; i <= kNodes; ++i) {
      const double x = ds * static_cast<double>(i);
      const double w = (i == kNodes) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
      s += w * c * x * x * std::exp(-0.5 * x * x) / std::sqrt(v * x * x + eta2);
    }
    return s * ds / 3.0;
  };
  const double md = static_cast<double>(m);
  CompensatedSum sum;
  sum.add(md / softening);
  for (std::size_t d = 1; d < m; ++d) {
    // midpoints at lag d differ by a Gaussian with per-axis variance (d - 1/2) h
    sum.add(2.0 * static_cast<double>(m - d) * g((static_cast<double>(d) - 0.5) * h));
  }
  return sum.value() / (md * md);
}

double wiener_mean_hamiltonian_continuum(double t) {
  require(t > 0, "wiener_mean_hamiltonian_continuum: t must be positive");
  return std::sqrt(2.0 / M_PI) * (8.0 / 3.0) / std::sqrt(t);
}

RefinementStudy refinement_study(const DiscretePath& path, double softening_scale, std::uint64_t seed) {
  RefinementStudy r;
  r.coarse = hamiltonian(occupation_of(path, default_softening(path.h, softening_scale)));
  const auto fine = refine_path(path, seed);
  r.fine = hamiltonian(occupation_of(fine, default_softening(fine.h, softening_scale)));
  return r;
}

nlohmann::json to_json(const ChainOutput& out) {
  nlohmann::json acc = nlohmann::json::object();
  for (std::size_t i = 0; i < kMoveTypes; ++i) {
    const auto m = static_cast<MoveType>(i);
    acc[move_name(m)] = {{"proposed", out.stats.proposed[i]},
                         {"accepted", out.stats.accepted[i]},
                         {"rate", out.stats.rate(m)}};
  }
  const auto hs = out.hamiltonians();
  nlohmann::json j = {{"schema_version", 1},
                      {"seed", out.seed},
                      {"config", to_json(out.config)},
                      {"draws", out.samples.size()},
                      {"acceptance", acc},
                      {"checkpoints", out.checkpoints},
                      {"max_checkpoint_deviation", out.max_checkpoint_deviation}};
  if (!hs.empty()) {
    j["mean_h"] = mean(hs);
    j["se_h"] = mcmc_standard_error(hs);
    j["ess_h"] = effective_sample_size(hs);
  }
  if (out.config.record_shift && !out.samples.empty()) {
    const auto d = out.orbit_distances();
    j["orbit_distance_quantiles"] = {{"q10", quantile(d, 0.1)}, {"q50", quantile(d, 0.5)}, {"q90", quantile(d, 0.9)}};
    j["ess_shift_radius"] = effective_sample_size(out.shift_radii());
  }
  return j;
}

void write_samples_csv(std::ostream& os, const ChainOutput& out) {
  os << "step,H,Yx,Yy,Yz,Wx,Wy,Wz,orbit_dist\n" << std::setprecision(17);
  for (const auto& s : out.samples) {
    os << s.step << ',' << s.hamiltonian << ',' << s.shift.x << ',' << s.shift.y << ',' << s.shift.z << ','
       << s.endpoint.x << ',' << s.endpoint.y << ',' << s.endpoint.z << ',' << s.orbit_distance << '\n';
  }
}

nlohmann::json to_json(const FreeEnergyEstimate& fe) {
  nlohmann::json flags = nlohmann::json::array();
  for (bool f : fe.flagged) flags.push_back(f);
  return {{"t", fe.t},
          {"betas", fe.betas},
          {"mean_h", fe.mean_h},
          {"se_h", fe.se_h},
          {"estimate", fe.estimate},
          {"standard_error", fe.standard_error},
          {"monotone", fe.monotone},
          {"swap_rates", fe.swap_rates},
          {"overlap", fe.overlap},
          {"flagged", flags}};
}

}  // namespace pekar
