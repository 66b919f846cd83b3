#include "pekar/radial.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace pekar {

RadialGrid::RadialGrid(double r_max, std::size_t n)
    : r_max_(r_max), n_(n), dr_(r_max / static_cast<double>(n)) {}

std::vector<double> RadialGrid::nodes() const {
  std::vector<double> out(n_);
  for (std::size_t i = 0; i < n_; ++i) out[i] = node(i);
  return out;
}

RadialGrid make_grid(double r_max, std::size_t n) {
  if (!(r_max > 0.0) || !std::isfinite(r_max)) {
    throw std::invalid_argument("make_grid: r_max must be positive and finite");
  }
  if (n < kMinGridNodes) {
    std::ostringstream msg;
    msg << "make_grid: need at least " << kMinGridNodes << " nodes, got " << n;
    throw std::invalid_argument(msg.str());
  }
  return RadialGrid(r_max, n);
}

RadialFunction::RadialFunction(RadialGrid grid, std::vector<double> values, Parity parity)
    : grid_(grid), values_(std::move(values)), parity_(parity) {
  if (values_.size() != grid_.size()) {
    throw std::invalid_argument("RadialFunction: value count does not match grid size");
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      std::ostringstream msg;
      msg << "RadialFunction: non-finite value at node " << i;
      throw std::invalid_argument(msg.str());
    }
  }
}

double RadialFunction::value_at_origin() const {
  const auto& v = values_;
  switch (parity_) {
    case Parity::even:
      // a + b r^2 through the first two nodes
      return v[0] - (v[1] - v[0]) / 3.0;
    case Parity::odd:
      return 0.0;
    case Parity::none:
      break;
  }
  return 3.0 * v[0] - 3.0 * v[1] + v[2];
}

double integrate_radial(const RadialFunction& f, int power) {
  if (power < 0 || power > 2) throw std::invalid_argument("integrate_radial: power must be 0, 1 or 2");
  const auto& grid = f.grid();
  const std::size_t n = grid.size();
  const double h = grid.dr();
  auto g = [&](std::size_t j) -> double {
    if (j == 0) return power == 0 ? f.value_at_origin() : 0.0;
    const double r = grid.node(j - 1);
    return std::pow(r, power) * f[j - 1];
  };

  // n intervals over the points 0, r_1, ..., r_n
  std::size_t simpson_intervals = (n % 2 == 0) ? n : n - 3;
  double s = g(0) + g(simpson_intervals);
  for (std::size_t j = 1; j < simpson_intervals; ++j) s += (j % 2 == 1 ? 4.0 : 2.0) * g(j);
  double total = s * h / 3.0;
  if (simpson_intervals != n) {
    const std::size_t a = simpson_intervals;
    total += 3.0 * h / 8.0 * (g(a) + 3.0 * g(a + 1) + 3.0 * g(a + 2) + g(a + 3));
  }
  return total;
}

double integrate_3d(const RadialFunction& f) { return 4.0 * M_PI * integrate_radial(f, 2); }

RadialFunction radial_derivative(const RadialFunction& f) {
  const std::size_t n = f.size();
  if (n < 3) throw std::invalid_argument("radial_derivative: need at least 3 nodes");
  const double h = f.grid().dr();
  std::vector<double> d(n);
  if (f.parity() == Parity::none) {
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
  } else {
    d[0] = (f[1] - f.value_at_origin()) / (2.0 * h);
  }
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
  d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);

  Parity p = Parity::none;
  if (f.parity() == Parity::even) p = Parity::odd;
  if (f.parity() == Parity::odd) p = Parity::even;
  return RadialFunction(f.grid(), std::move(d), p);
}

ExtrapolationError::ExtrapolationError(double r)
    : std::domain_error("interpolate: r = " + std::to_string(r) + " outside [0, r_max]"), r_(r) {}

namespace {

// Node slope before limiting.
double raw_slope(const RadialFunction& f, std::size_t k) {
  const std::size_t n = f.size();
  const double h = f.grid().dr();
  if (k == 0) {
    if (f.parity() == Parity::none) return (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    return (f[1] - f.value_at_origin()) / (2.0 * h);
  }
  if (k == n - 1) return (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
  return (f[k + 1] - f[k - 1]) / (2.0 * h);
}

double secant(const RadialFunction& f, std::size_t k) {
  // secant over [node k, node k+1]; k == npos means [0, node 0]
  return (f[k + 1] - f[k]) / f.grid().dr();
}

// Fritsch-Carlson step 1: zero the slope at a local extremum of the data.
double limited_slope(const RadialFunction& f, std::size_t k) {
  const double m = raw_slope(f, k);
  const std::size_t n = f.size();
  if (k == 0 || k == n - 1) return m;
  const double left = secant(f, k - 1);
  const double right = secant(f, k);
  if (left == 0.0 || right == 0.0 || (left > 0.0) != (right > 0.0)) return 0.0;
  return m;
}

}  // namespace

double interpolate(const RadialFunction& f, double r) {
  const auto& grid = f.grid();
  const double h = grid.dr();
  const double r_max = grid.r_max();
  if (!(r >= 0.0) || r > r_max * (1.0 + 1e-14)) throw ExtrapolationError(r);

  if (r < h) {
    const double f0 = f[0];
    const double f1 = f[1];
    switch (f.parity()) {
      case Parity::even: {
        const double b = (f1 - f0) / (3.0 * h * h);
        return f0 + b * (r * r - h * h);
      }
      case Parity::odd: {
        // c r + d r^3 through (h, f0) and (2h, f1)
        const double d = (f1 - 2.0 * f0) / (6.0 * h * h * h);
        const double c = f0 / h - d * h * h;
        return c * r + d * r * r * r;
      }
      case Parity::none:
        break;
    }
    // quadratic through the first three nodes
    const double s = r / h - 1.0;
    const double f2 = f[2];
    return f0 + s * (f1 - f0) + 0.5 * s * (s - 1.0) * (f2 - 2.0 * f1 + f0);
  }

  const std::size_t n = f.size();
  const double q = r / h;
  const double nearest = std::round(q);
  if (std::abs(q - nearest) <= 1e-12 * q) return f[std::min(static_cast<std::size_t>(nearest), n) - 1];
  std::size_t k = static_cast<std::size_t>(q) - 1;  // node(k) <= r
  if (k >= n - 1) k = n - 2;
  const double x0 = grid.node(k);
  const double s = (r - x0) / h;
  if (s <= 0.0) return f[k];
  if (s >= 1.0) return f[k + 1];

  const double delta = secant(f, k);
  double m0 = limited_slope(f, k);
  double m1 = limited_slope(f, k + 1);
  if (delta == 0.0) {
    m0 = 0.0;
    m1 = 0.0;
  } else {
    const double a = m0 / delta;
    const double b = m1 / delta;
    if (a < 0.0) m0 = 0.0;
    if (b < 0.0) m1 = 0.0;
    const double q = a * a + b * b;
    if (q > 9.0) {
      const double tau = 3.0 / std::sqrt(q);
      m0 = tau * a * delta;
      m1 = tau * b * delta;
    }
  }

  const double s2 = s * s;
  const double s3 = s2 * s;
  const double h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
  const double h10 = s3 - 2.0 * s2 + s;
  const double h01 = -2.0 * s3 + 3.0 * s2;
  const double h11 = s3 - s2;
  return h00 * f[k] + h10 * h * m0 + h01 * f[k + 1] + h11 * h * m1;
}

void write_csv(std::ostream& os, const RadialFunction& f, const std::string& value_name) {
  os << "r," << value_name << '\n';
  os << std::setprecision(17);
  for (std::size_t i = 0; i < f.size(); ++i) os << f.grid().node(i) << ',' << f[i] << '\n';
}

RadialSampler::RadialSampler(const RadialFunction& radial_density) {
  const auto& grid = radial_density.grid();
  const std::size_t n = grid.size();
  r_.resize(n + 1);
  cdf_.resize(n + 1);
  r_[0] = 0.0;
  double prev = std::max(0.0, radial_density.value_at_origin());
  double acc = 0.0;
  cdf_[0] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = radial_density[i];
    if (v < 0.0) throw std::invalid_argument("RadialSampler: negative density value");
    r_[i + 1] = grid.node(i);
    acc += 0.5 * (prev + v) * grid.dr();
    cdf_[i + 1] = acc;
    prev = v;
  }
  if (!(acc > 0.0)) throw std::invalid_argument("RadialSampler: density has zero mass");
  mass_ = acc;
  for (double& c : cdf_) c /= acc;
  cdf_.back() = 1.0;
}

double RadialSampler::quantile(double u) const {
  u = std::clamp(u, 0.0, 1.0);
  auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.begin()) return 0.0;
  if (it == cdf_.end()) return r_.back();
  const std::size_t j = static_cast<std::size_t>(it - cdf_.begin());
  const double c0 = cdf_[j - 1];
  const double c1 = cdf_[j];
  const double w = c1 > c0 ? (u - c0) / (c1 - c0) : 0.0;
  return r_[j - 1] + w * (r_[j] - r_[j - 1]);
}

double RadialSampler::cdf(double r) const {
  if (r <= 0.0) return 0.0;
  if (r >= r_.back()) return 1.0;
  auto it = std::upper_bound(r_.begin(), r_.end(), r);
  const std::size_t j = static_cast<std::size_t>(it - r_.begin());
  const double w = (r - r_[j - 1]) / (r_[j] - r_[j - 1]);
  return cdf_[j - 1] + w * (cdf_[j] - cdf_[j - 1]);
}

}  // namespace pekar
