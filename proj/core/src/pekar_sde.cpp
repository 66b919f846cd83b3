#include "pekar/pekar_sde.hpp"

#include <cmath>
#include <exception>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "pekar/parallel.hpp"

namespace pekar {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

constexpr double kLogPsiFloor = -700.0;

std::shared_ptr<const RadialSampler> radial_law(const RadialGrid& grid, const std::function<double(double)>& log_psi) {
  const auto density = RadialFunction::from(
      grid, [&](double r) { return 4.0 * M_PI * r * r * std::exp(2.0 * log_psi(r)); }, Parity::even);
  return std::make_shared<const RadialSampler>(density);
}

}  // namespace

// --- tilts -----------------------------------------------------------------

PekarTilt::PekarTilt(const PekarSolution& sol, LaplacianSource source) : sol_(&sol), source_(source) {
  if (source_ == LaplacianSource::finite_difference)
    fd_ = std::make_shared<const RadialFunction>(laplacian_ratio_fd(sol.psi0));
  radial_ = radial_law(sol.grid(), [this](double s) { return sol_->log_psi_at(s); });
}

double PekarTilt::laplacian_ratio(double r) const {
  if (source_ == LaplacianSource::finite_difference && r <= sol_->tail_radius()) return interpolate(*fd_, r);
  return sol_->laplacian_ratio_at(r);
}

double PekarTilt::stationary_cdf(double r) const { return radial_->cdf(r); }

GaussianTilt::GaussianTilt(double sigma) : sigma_(sigma) {
  require(sigma > 0 && std::isfinite(sigma), "GaussianTilt: sigma must be positive");
}

double GaussianTilt::drift(double r, bool* far_field) const {
  if (far_field) *far_field = false;
  return -r / (sigma_ * sigma_);
}

double GaussianTilt::log_psi(double r) const { return -r * r / (2.0 * sigma_ * sigma_); }

double GaussianTilt::laplacian_ratio(double r) const {
  const double s2 = sigma_ * sigma_;
  return r * r / (s2 * s2) - 3.0 / s2;
}

double GaussianTilt::stationary_cdf(double r) const {
  if (r <= 0) return 0.0;
  const double x = r / sigma_;
  return std::erf(x) - 2.0 / std::sqrt(M_PI) * x * std::exp(-x * x);
}

double FlatTilt::stationary_cdf(double) const {
  throw std::logic_error("FlatTilt: Brownian motion has no stationary law");
}

TabulatedTilt::TabulatedTilt(RadialFunction log_psi, RadialFunction laplacian_ratio)
    : log_psi_(std::move(log_psi)), laplacian_(std::move(laplacian_ratio)) {
  require(log_psi_.grid() == laplacian_.grid(), "TabulatedTilt: grids differ");
  log_psi_.set_parity(Parity::even);
  laplacian_.set_parity(Parity::even);
  drift_ = radial_derivative(log_psi_);
  radial_ = radial_law(log_psi_.grid(), [this](double r) { return interpolate(log_psi_, r); });
}

double TabulatedTilt::drift(double r, bool* far_field) const {
  if (far_field) *far_field = false;
  if (r < log_psi_.grid().dr()) return 0.0;
  return interpolate(drift_, r);
}

double TabulatedTilt::stationary_cdf(double r) const { return radial_->cdf(r); }

// --- simulation ------------------------------------------------------------

Vec3 em_step(const Vec3& x, const RadialTilt& tilt, double h, const Vec3& xi, bool* far_field) {
  const double r = norm(x);
  const double sh = std::sqrt(h);
  if (r == 0.0) {
    if (far_field) *far_field = false;
    return x + sh * xi;
  }
  const double b = tilt.drift(r, far_field);
  return x + (b * h / r) * x + sh * xi;
}

void SdeConfig::validate() const {
  require(T >= 0 && std::isfinite(T), "sde: T must be nonnegative");
  require(h > 0, "sde: h must be positive");
  if (T > 0) (void)step_count(T, h);
  require(is_finite(x0), "sde: x0 must be finite");
  require(bins > 0, "sde: bins must be positive");
  require(hist_max >= 0, "sde: hist_max must be nonnegative");
  require(record_stride > 0, "sde: record_stride must be positive");
}

nlohmann::json to_json(const SdeConfig& c) {
  return {{"T", c.T},       {"h", c.h},
          {"x0", {c.x0.x, c.x0.y, c.x0.z}},
          {"seed", c.seed}, {"bins", c.bins},
          {"hist_max", c.hist_max},
          {"record_stride", c.record_stride},
          {"keep_every", c.keep_every}};
}

SdeConfig sde_config_from_json(const nlohmann::json& j, SdeConfig c) {
  c.T = j.value("T", c.T);
  c.h = j.value("h", c.h);
  if (j.contains("x0")) {
    const auto& v = j.at("x0");
    c.x0 = {v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>()};
  }
  c.seed = j.value("seed", c.seed);
  c.bins = j.value("bins", c.bins);
  c.hist_max = j.value("hist_max", c.hist_max);
  c.record_stride = j.value("record_stride", c.record_stride);
  c.keep_every = j.value("keep_every", c.keep_every);
  return c;
}

SdeBlowUp::SdeBlowUp(std::uint64_t step, double radius)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "SDE blow-up at step " << step << " (|x| = " << radius << ")";
        return os.str();
      }()),
      step_(step) {}

Trajectory simulate(const SdeConfig& config, const RadialTilt& tilt) {
  config.validate();
  if (const auto* p = dynamic_cast<const PekarTilt*>(&tilt)) {
    const double decay = 1.0 / p->solution().lambda;  // squared decay length
    require(config.h <= 1e-2 * decay, "sde: h must not exceed 1e-2 / lambda");
  }
  const double range = config.hist_max > 0 ? config.hist_max : tilt.extent();
  const double limit = 10.0 * range;
  Trajectory tr;
  tr.radial = Histogram(0.0, range, config.bins);
  std::mt19937_64 rng(config.seed);
  Vec3 x = config.x0;
  std::size_t recorded = 0;
  auto record = [&] {
    tr.radial.add(norm(x));
    if (config.keep_every > 0 && recorded % config.keep_every == 0) tr.positions.push_back(x);
    ++recorded;
  };
  record();
  const std::uint64_t m = config.T > 0 ? step_count(config.T, config.h) : 0;
  for (std::uint64_t k = 1; k <= m; ++k) {
    bool far = false;
    x = em_step(x, tilt, config.h, rng, &far);
    if (far) ++tr.far_field_steps;
    const double r = norm(x);
    if (!(r <= limit)) throw SdeBlowUp(k, r);
    if (k % config.record_stride == 0) record();
  }
  tr.steps = m;
  tr.final_position = x;
  return tr;
}

Trajectory simulate_many(const SdeConfig& config, const RadialTilt& tilt, std::size_t count) {
  require(count > 0, "simulate_many: count must be positive");
  std::vector<Trajectory> runs(count);
  std::vector<std::exception_ptr> errors(count);
  parallel_for(count, [&](std::size_t i) {
    try {
      SdeConfig c = config;
      c.seed = derive_seed(config.seed, i);
      runs[i] = simulate(c, tilt);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  Trajectory out = std::move(runs[0]);
  for (std::size_t i = 1; i < count; ++i) {
    out.radial.merge(runs[i].radial);
    out.steps += runs[i].steps;
    out.far_field_steps += runs[i].far_field_steps;
    out.positions.insert(out.positions.end(), runs[i].positions.begin(), runs[i].positions.end());
  }
  return out;
}

std::vector<double> stationary_reference(const Histogram& h, const RadialTilt& tilt) {
  return bin_probabilities(h, [&](double r) { return tilt.stationary_cdf(r); });
}

DiscretePath sde_path(const RadialTilt& tilt, const Vec3& x0, double t, double h, std::uint64_t seed) {
  const std::size_t m = step_count(t, h);
  std::mt19937_64 rng(seed);
  DiscretePath p;
  p.h = h;
  p.origin_start = x0 == Vec3{};
  p.positions.resize(m + 1);
  p.positions[0] = x0;
  for (std::size_t k = 0; k < m; ++k) p.positions[k + 1] = em_step(p.positions[k], tilt, h, rng);
  return p;
}

// --- path functionals ------------------------------------------------------

PsiUnderflow::PsiUnderflow(double r)
    : std::domain_error([&] {
        std::ostringstream os;
        os << "psi underflows at radius " << r;
        return os.str();
      }()),
      r_(r) {}

namespace {

double checked_log_psi(const RadialTilt& tilt, double r) {
  const double v = tilt.log_psi(r);
  if (!(v > kLogPsiFloor)) throw PsiUnderflow(r);
  return v;
}

}  // namespace

double log_girsanov_weight(const DiscretePath& path, const RadialTilt& tilt, const Vec3& center) {
  require(path.steps() >= 1, "girsanov_weight: empty path");
  const double start = checked_log_psi(tilt, distance(path.positions.front(), center));
  const double end = checked_log_psi(tilt, distance(path.endpoint(), center));
  const double integral = time_integral(path, [&](const Vec3& w) { return tilt.laplacian_ratio(distance(w, center)); });
  return start - end + 0.5 * integral;
}

double girsanov_weight(const DiscretePath& path, const RadialTilt& tilt, const Vec3& center) {
  return std::exp(log_girsanov_weight(path, tilt, center));
}

double girsanov_weight(const DiscretePath& path, const PekarSolution& sol, const Vec3& center) {
  return girsanov_weight(path, PekarTilt(sol), center);
}

PathwiseElCheck pathwise_el_check(const DiscretePath& path, const PekarSolution& sol, const Vec3& center,
                                  LaplacianSource source) {
  require(path.steps() >= 1, "pathwise_el_check: empty path");
  const PekarTilt tilt(sol, source);
  for (const auto& w : path.positions) (void)checked_log_psi(tilt, distance(w, center));
  const double t0 = path.horizon();
  const auto mids = midpoints(path);
  CompensatedSum pairing;
  for (const auto& p : mids) pairing.add(sol.potential_at(distance(p, center)));
  PathwiseElCheck c;
  c.coulomb_term = 2.0 * t0 * pairing.value() / static_cast<double>(mids.size());
  c.laplacian_term = 0.5 * time_integral(path, [&](const Vec3& w) { return tilt.laplacian_ratio(distance(w, center)); });
  c.rhs = 0.5 * sol.lambda * t0;
  c.residual = std::abs(c.coulomb_term + c.laplacian_term - c.rhs) / t0;
  return c;
}

double log_feynman_kac_weight(const DiscretePath& path, const PekarSolution& sol, const Vec3& center) {
  return time_integral(path, [&](const Vec3& w) { return sol.potential_at(distance(w, center)); });
}

double feynman_kac_weight(const DiscretePath& path, const PekarSolution& sol, const Vec3& center) {
  return std::exp(log_feynman_kac_weight(path, sol, center));
}

ImportanceCheck importance_check(const RadialTilt& tilt, double t, double h, std::size_t paths,
                                 const std::function<double(const Vec3&)>& f, std::uint64_t seed) {
  require(paths >= 2, "importance_check: need at least two paths");
  std::vector<double> weighted(paths), plain(paths);
  std::vector<std::exception_ptr> errors(paths);
  parallel_for(paths, [&](std::size_t i) {
    try {
      const auto tilted = sde_path(tilt, {}, t, h, derive_seed(seed, 2 * i));
      weighted[i] = girsanov_weight(tilted, tilt) * f(tilted.endpoint());
      plain[i] = f(sample_wiener(t, h, derive_seed(seed, 2 * i + 1)).endpoint());
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  ImportanceCheck c;
  c.weighted_mean = mean(weighted);
  c.weighted_se = standard_error(weighted);
  c.wiener_mean = mean(plain);
  c.wiener_se = standard_error(plain);
  c.z = (c.weighted_mean - c.wiener_mean) / std::hypot(c.weighted_se, c.wiener_se);
  return c;
}

void write_histogram_csv(std::ostream& os, const Histogram& h, std::span<const double> reference) {
  require(reference.size() == h.bins(), "write_histogram_csv: reference size mismatch");
  os << "r_bin_center,count,reference_density\n" << std::setprecision(17);
  for (std::size_t b = 0; b < h.bins(); ++b)
    os << h.center(b) << ',' << h.counts[b] << ',' << reference[b] / h.width() << '\n';
}

}  // namespace pekar
