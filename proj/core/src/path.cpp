#include "pekar/path.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pekar {

namespace {

double log_gauss3(const Vec3& d, double var) {
  return -1.5 * std::log(2.0 * M_PI * var) - norm2(d) / (2.0 * var);
}

}  // namespace

DiscretePath DiscretePath::translated(const Vec3& v) const {
  DiscretePath out = *this;
  for (auto& p : out.positions) p += v;
  out.origin_start = origin_start && v == Vec3{};
  return out;
}

std::size_t step_count(double t, double h) {
  if (!(h > 0.0) || !(t > 0.0)) throw std::invalid_argument("step_count: need t > 0 and h > 0");
  const double m = t / h;
  const double r = std::round(m);
  if (std::abs(m - r) > 1e-9 * std::max(1.0, m)) {
    std::ostringstream msg;
    msg << "step_count: t / h = " << m << " is not an integer";
    throw std::invalid_argument(msg.str());
  }
  return static_cast<std::size_t>(r);
}

DiscretePath sample_wiener(double t, double h, std::uint64_t seed) {
  const std::size_t m = step_count(t, h);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  DiscretePath path;
  path.h = h;
  path.origin_start = true;
  path.positions.resize(m + 1);
  const double s = std::sqrt(h);
  for (std::size_t k = 0; k < m; ++k) {
    const Vec3 z{g(rng), g(rng), g(rng)};
    path.positions[k + 1] = path.positions[k] + s * z;
  }
  return path;
}

double default_softening(double h, double scale) { return scale * std::sqrt(h); }

std::vector<Vec3> midpoints(const DiscretePath& path) {
  std::vector<Vec3> mids(path.steps());
  for (std::size_t k = 0; k < mids.size(); ++k) mids[k] = 0.5 * (path.positions[k] + path.positions[k + 1]);
  return mids;
}

OccupationMeasure occupation_of(const DiscretePath& path, double softening) {
  if (path.steps() < 1) throw std::invalid_argument("occupation_of: path needs at least one step");
  return OccupationMeasure::uniform(midpoints(path), softening);
}

std::vector<Vec3> bridge_segment(std::span<const Vec3> positions, double h, std::size_t i, std::size_t j,
                                 std::span<const Vec3> normals) {
  if (!(i < j && j < positions.size())) throw std::invalid_argument("bridge_segment: need i < j <= m");
  const std::size_t count = j - i - 1;
  if (normals.size() < count) throw std::invalid_argument("bridge_segment: not enough normals");
  std::vector<Vec3> out(count);
  const Vec3 target = positions[j];
  Vec3 prev = positions[i];
  for (std::size_t q = 0; q < count; ++q) {
    const double remaining = static_cast<double>(j - (i + q));  // steps from prev to target
    const Vec3 mean = prev + (target - prev) * (1.0 / remaining);
    const double sd = std::sqrt(h * (remaining - 1.0) / remaining);
    out[q] = mean + sd * normals[q];
    prev = out[q];
  }
  return out;
}

std::vector<Vec3> free_segment(std::span<const Vec3> positions, double h, std::size_t i,
                               std::span<const Vec3> normals) {
  if (i >= positions.size()) throw std::invalid_argument("free_segment: index out of range");
  const std::size_t count = positions.size() - 1 - i;
  if (normals.size() < count) throw std::invalid_argument("free_segment: not enough normals");
  std::vector<Vec3> out(count);
  const double s = std::sqrt(h);
  Vec3 prev = positions[i];
  for (std::size_t q = 0; q < count; ++q) {
    out[q] = prev + s * normals[q];
    prev = out[q];
  }
  return out;
}

DiscretePath propose_bridge(const DiscretePath& path, std::size_t i, std::size_t j, std::span<const Vec3> normals) {
  if (!(i < j && j <= path.steps())) throw std::invalid_argument("propose_bridge: need 0 <= i < j <= m");
  DiscretePath out = path;
  if (j == i + 1) return out;
  const auto seg = bridge_segment(path.positions, path.h, i, j, normals);
  for (std::size_t q = 0; q < seg.size(); ++q) out.positions[i + 1 + q] = seg[q];
  return out;
}

double log_wiener_segment(std::span<const Vec3> positions, double h, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t k = i; k < j; ++k) s += log_gauss3(positions[k + 1] - positions[k], h);
  return s;
}

double log_bridge_density(std::span<const Vec3> positions, double h, std::size_t i, std::size_t j) {
  const Vec3 target = positions[j];
  double s = 0.0;
  for (std::size_t k = i + 1; k < j; ++k) {
    const Vec3 prev = positions[k - 1];
    const double remaining = static_cast<double>(j - k + 1);
    const Vec3 mean = prev + (target - prev) * (1.0 / remaining);
    s += log_gauss3(positions[k] - mean, h * (remaining - 1.0) / remaining);
  }
  return s;
}

DiscretePath refine_path(const DiscretePath& path, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  DiscretePath out;
  out.h = 0.5 * path.h;
  out.origin_start = path.origin_start;
  out.positions.reserve(2 * path.positions.size() - 1);
  const double sd = std::sqrt(path.h / 4.0);
  for (std::size_t k = 0; k + 1 < path.positions.size(); ++k) {
    const Vec3 a = path.positions[k];
    const Vec3 b = path.positions[k + 1];
    out.positions.push_back(a);
    out.positions.push_back(0.5 * (a + b) + sd * Vec3{g(rng), g(rng), g(rng)});
  }
  out.positions.push_back(path.positions.back());
  return out;
}

}  // namespace pekar
