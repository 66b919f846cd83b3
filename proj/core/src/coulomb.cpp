#include "pekar/coulomb.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "pekar/parallel.hpp"
#include "pekar/stats.hpp"

namespace pekar {

OccupationMeasure::OccupationMeasure(std::vector<Vec3> points, std::vector<double> weights, double softening)
    : points_(std::move(points)), weights_(std::move(weights)), softening_(softening) {
  if (points_.empty()) throw std::invalid_argument("OccupationMeasure: no points");
  if (points_.size() != weights_.size()) throw std::invalid_argument("OccupationMeasure: weight count mismatch");
  if (!(softening_ >= 0.0 && softening_ < 1.0)) {
    throw std::invalid_argument("OccupationMeasure: softening must lie in [0, 1)");
  }
  CompensatedSum total;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!is_finite(points_[i])) throw std::invalid_argument("OccupationMeasure: non-finite coordinate");
    if (!(weights_[i] >= 0.0)) throw std::invalid_argument("OccupationMeasure: negative weight");
    total.add(weights_[i]);
  }
  if (std::abs(total.value() - 1.0) > 1e-12) {
    std::ostringstream msg;
    msg << "OccupationMeasure: weights sum to " << std::setprecision(17) << total.value();
    throw std::invalid_argument(msg.str());
  }
}

OccupationMeasure OccupationMeasure::uniform(std::vector<Vec3> points, double softening) {
  const std::size_t n = points.size();
  if (n == 0) throw std::invalid_argument("OccupationMeasure: no points");
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  return OccupationMeasure(std::move(points), std::move(w), softening);
}

OccupationMeasure OccupationMeasure::translated(const Vec3& v) const {
  std::vector<Vec3> pts(points_);
  for (auto& p : pts) p += v;
  return OccupationMeasure(std::move(pts), weights_, softening_);
}

OccupationMeasure OccupationMeasure::slice(std::size_t first, std::size_t last) const {
  if (!(first < last && last <= points_.size())) throw std::invalid_argument("OccupationMeasure::slice: bad range");
  std::vector<Vec3> pts(points_.begin() + static_cast<std::ptrdiff_t>(first),
                        points_.begin() + static_cast<std::ptrdiff_t>(last));
  std::vector<double> w(weights_.begin() + static_cast<std::ptrdiff_t>(first),
                        weights_.begin() + static_cast<std::ptrdiff_t>(last));
  CompensatedSum s;
  for (double x : w) s.add(x);
  const double mass = s.value();
  for (double& x : w) x /= mass;
  return OccupationMeasure(std::move(pts), std::move(w), softening_);
}

Vec3 OccupationMeasure::median() const {
  std::array<double, 3> out{};
  std::vector<std::size_t> idx(points_.size());
  for (int axis = 0; axis < 3; ++axis) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return points_[a][axis] < points_[b][axis] || (points_[a][axis] == points_[b][axis] && a < b);
    });
    double acc = 0.0;
    out[static_cast<std::size_t>(axis)] = points_[idx.back()][axis];
    for (std::size_t k : idx) {
      acc += weights_[k];
      if (acc >= 0.5 - 1e-12) {
        out[static_cast<std::size_t>(axis)] = points_[k][axis];
        break;
      }
    }
  }
  return {out[0], out[1], out[2]};
}

std::pair<Vec3, Vec3> OccupationMeasure::bounding_box() const {
  Vec3 lo = points_.front();
  Vec3 hi = points_.front();
  for (const auto& p : points_) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  return {lo, hi};
}

CollisionError::CollisionError(std::size_t i, std::size_t j)
    : std::invalid_argument("hamiltonian: points " + std::to_string(i) + " and " + std::to_string(j) +
                            " coincide with zero softening"),
      i_(i),
      j_(j) {}

double lambda_at(const OccupationMeasure& mu, const Vec3& x) {
  const auto pts = mu.points();
  const auto w = mu.weights();
  const SoftenedKernel k = mu.kernel();
  const bool exclude = mu.softening() == 0.0;
  CompensatedSum s;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double r2 = norm2(x - pts[i]);
    if (exclude && r2 == 0.0) continue;
    s.add(w[i] * k(r2));
  }
  return s.value();
}

double hamiltonian(const OccupationMeasure& mu) {
  const auto pts = mu.points();
  const auto w = mu.weights();
  const std::size_t n = pts.size();
  const SoftenedKernel k = mu.kernel();
  const bool soft = mu.softening() > 0.0;

  std::vector<double> rows(n, 0.0);
  std::vector<std::size_t> collision(n, n);
  parallel_for(n, [&](std::size_t i) {
    CompensatedSum s;
    const Vec3 pi = pts[i];
    for (std::size_t j = i + 1; j < n; ++j) {
      const double r2 = norm2(pi - pts[j]);
      if (!soft && r2 == 0.0) {
        if (collision[i] == n) collision[i] = j;
        continue;
      }
      s.add(w[j] * k(r2));
    }
    rows[i] = w[i] * s.value();
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (collision[i] != n) throw CollisionError(i, collision[i]);
  }
  CompensatedSum total;
  for (double r : rows) total.add(2.0 * r);
  if (soft) {
    const double v0 = 1.0 / mu.softening();
    for (double wi : w) total.add(wi * wi * v0);
  }
  return total.value();
}

double hamiltonian_reference(const OccupationMeasure& mu) {
  const auto pts = mu.points();
  const auto w = mu.weights();
  const double eta = mu.softening();
  double total = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (i == j && eta == 0.0) continue;
      const double dx = pts[i].x - pts[j].x;
      const double dy = pts[i].y - pts[j].y;
      const double dz = pts[i].z - pts[j].z;
      total += w[i] * w[j] / std::sqrt(dx * dx + dy * dy + dz * dz + eta * eta);
    }
  }
  return total;
}

double cross_energy(const OccupationMeasure& mu, const OccupationMeasure& nu) {
  const SoftenedKernel k{std::max(mu.softening(), nu.softening())};
  const auto p = mu.points();
  const auto q = nu.points();
  const auto wp = mu.weights();
  const auto wq = nu.weights();
  std::vector<double> rows(p.size());
  std::vector<std::size_t> collision(p.size(), q.size());
  parallel_for(p.size(), [&](std::size_t i) {
    CompensatedSum s;
    for (std::size_t j = 0; j < q.size(); ++j) {
      const double r2 = norm2(p[i] - q[j]);
      if (k.eta == 0.0 && r2 == 0.0) {
        if (collision[i] == q.size()) collision[i] = j;
        continue;
      }
      s.add(wq[j] * k(r2));
    }
    rows[i] = wp[i] * s.value();
  });
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (collision[i] != q.size()) throw CollisionError(i, collision[i]);
  }
  CompensatedSum total;
  for (double r : rows) total.add(r);
  return total.value();
}

double cross_energy(const OccupationMeasure& mu, const PekarSolution& sol, const Vec3& center) {
  const auto p = mu.points();
  const auto w = mu.weights();
  CompensatedSum s;
  for (std::size_t i = 0; i < p.size(); ++i) s.add(w[i] * sol.potential_at(distance(p[i], center)));
  return s.value();
}

SplitCheck splitting_check(const OccupationMeasure& lt, double t0, double t) {
  if (!(t0 > 0.0 && t0 < t)) throw std::invalid_argument("splitting_check: need 0 < t0 < t");
  if (!(lt.softening() > 0.0)) throw std::invalid_argument("splitting_check: needs positive softening");
  const double n = static_cast<double>(lt.size());
  const double kd = t0 / t * n;
  const auto k = static_cast<std::size_t>(std::llround(kd));
  if (std::abs(kd - static_cast<double>(k)) > 1e-9 || k == 0 || k >= lt.size()) {
    throw std::invalid_argument("splitting_check: t0 must fall on a sample boundary");
  }
  const auto w = lt.weights();
  for (double x : w) {
    if (std::abs(x - 1.0 / n) > 1e-15) throw std::invalid_argument("splitting_check: weights must be uniform");
  }
  const OccupationMeasure head = lt.slice(0, k);
  const OccupationMeasure tail = lt.slice(k, lt.size());

  SplitCheck c;
  c.lhs = t * hamiltonian(lt);
  c.head = t0 * t0 / t * hamiltonian(head);
  c.cross = 2.0 * t0 * (t - t0) / t * cross_energy(head, tail);
  c.tail = (t - t0) * (t - t0) / t * hamiltonian(tail);
  c.residual = std::abs(c.lhs - (c.head + c.cross + c.tail));
  return c;
}

std::size_t EvalGrid::size() const {
  return (2 * half_counts[0] + 1) * (2 * half_counts[1] + 1) * (2 * half_counts[2] + 1);
}

std::vector<Vec3> EvalGrid::points() const {
  std::vector<Vec3> out;
  out.reserve(size());
  const auto hx = static_cast<std::ptrdiff_t>(half_counts[0]);
  const auto hy = static_cast<std::ptrdiff_t>(half_counts[1]);
  const auto hz = static_cast<std::ptrdiff_t>(half_counts[2]);
  for (std::ptrdiff_t i = -hx; i <= hx; ++i) {
    for (std::ptrdiff_t j = -hy; j <= hy; ++j) {
      for (std::ptrdiff_t k = -hz; k <= hz; ++k) {
        out.push_back(center + spacing * Vec3{static_cast<double>(i), static_cast<double>(j),
                                              static_cast<double>(k)});
      }
    }
  }
  return out;
}

EvalGrid EvalGrid::covering(const OccupationMeasure& mu, const Vec3& center, double margin, std::size_t budget,
                            double min_spacing) {
  if (budget < 27) throw std::invalid_argument("EvalGrid::covering: budget too small");
  const auto [lo, hi] = mu.bounding_box();
  std::array<double, 3> half{};
  for (int a = 0; a < 3; ++a) {
    half[static_cast<std::size_t>(a)] = std::max(std::abs(hi[a] - center[a]), std::abs(center[a] - lo[a])) + margin;
  }
  double spacing = std::max(min_spacing, std::cbrt(8.0 * half[0] * half[1] * half[2] / static_cast<double>(budget)));
  EvalGrid g;
  g.center = center;
  for (;;) {
    g.spacing = spacing;
    for (std::size_t a = 0; a < 3; ++a) g.half_counts[a] = static_cast<std::size_t>(std::ceil(half[a] / spacing));
    if (g.size() <= budget) break;
    spacing *= 1.05;
  }
  return g;
}

namespace {

struct LatticeEval {
  std::vector<Vec3> x;
  std::vector<double> lambda;
};

LatticeEval evaluate_on(const OccupationMeasure& mu, const EvalGrid& grid) {
  LatticeEval e;
  e.x = grid.points();
  e.lambda.resize(e.x.size());
  parallel_for(e.x.size(), [&](std::size_t i) { e.lambda[i] = lambda_at(mu, e.x[i]); });
  return e;
}

// sup-discrepancy for one candidate, abandoning once it exceeds `bound`
double candidate_distance(const LatticeEval& e, const PekarSolution& sol, const Vec3& w, double bound) {
  double worst = 0.0;
  for (std::size_t i = 0; i < e.x.size(); ++i) {
    const double d = std::abs(e.lambda[i] - sol.potential_at(distance(e.x[i], w)));
    if (d > worst) {
      worst = d;
      if (worst > bound) return worst;
    }
  }
  return worst;
}

OrbitDistance search(const LatticeEval& e, const PekarSolution& sol, std::span<const Vec3> candidates,
                     std::vector<double>* all = nullptr) {
  if (candidates.empty()) throw std::invalid_argument("orbit_sup_distance: empty candidate set");
  OrbitDistance best{std::numeric_limits<double>::infinity(), candidates.front()};
  if (all) all->assign(candidates.size(), 0.0);
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const double bound = all ? std::numeric_limits<double>::infinity() : best.distance;
    const double d = candidate_distance(e, sol, candidates[c], bound);
    if (all) (*all)[c] = d;
    if (d < best.distance || (d == best.distance && candidates[c] < best.best_shift)) {
      best = {d, candidates[c]};
    }
  }
  return best;
}

std::vector<Vec3> cube_lattice(const Vec3& center, double spacing, std::array<std::ptrdiff_t, 3> lo,
                               std::array<std::ptrdiff_t, 3> hi) {
  std::vector<Vec3> out;
  for (std::ptrdiff_t i = lo[0]; i <= hi[0]; ++i) {
    for (std::ptrdiff_t j = lo[1]; j <= hi[1]; ++j) {
      for (std::ptrdiff_t k = lo[2]; k <= hi[2]; ++k) {
        out.push_back(center + spacing * Vec3{static_cast<double>(i), static_cast<double>(j),
                                              static_cast<double>(k)});
      }
    }
  }
  return out;
}

}  // namespace

OrbitDistance orbit_sup_distance(const OccupationMeasure& mu, const PekarSolution& sol, const EvalGrid& grid,
                                 std::span<const Vec3> shift_candidates) {
  if (shift_candidates.empty()) throw std::invalid_argument("orbit_sup_distance: empty candidate set");
  const LatticeEval e = evaluate_on(mu, grid);
  return search(e, sol, shift_candidates);
}

ShiftSearch best_shift(const OccupationMeasure& mu, const PekarSolution& sol, const ShiftSearchOptions& opts) {
  if (opts.coarse_per_axis < 1) throw std::invalid_argument("best_shift: coarse_per_axis must be positive");
  const Vec3 anchor = mu.median();
  const EvalGrid grid = EvalGrid::covering(mu, anchor, opts.margin, opts.grid_budget);
  const LatticeEval e = evaluate_on(mu, grid);

  // level 0: lattice anchored at the median spanning the bounding box
  const auto [lo, hi] = mu.bounding_box();
  double extent = 0.0;
  for (int a = 0; a < 3; ++a) extent = std::max(extent, hi[a] - lo[a]);
  const double per_axis = static_cast<double>(std::max<std::size_t>(opts.coarse_per_axis, 2) - 1);
  double spacing = std::max(extent / per_axis, 0.25);
  std::array<std::ptrdiff_t, 3> klo{};
  std::array<std::ptrdiff_t, 3> khi{};
  for (int a = 0; a < 3; ++a) {
    klo[static_cast<std::size_t>(a)] = static_cast<std::ptrdiff_t>(std::floor((lo[a] - anchor[a]) / spacing));
    khi[static_cast<std::size_t>(a)] = static_cast<std::ptrdiff_t>(std::ceil((hi[a] - anchor[a]) / spacing));
  }
  const std::vector<Vec3> coarse = cube_lattice(anchor, spacing, klo, khi);
  std::vector<double> coarse_d;
  OrbitDistance best = search(e, sol, coarse, opts.record_runner_up ? &coarse_d : nullptr);

  ShiftSearch out;
  if (opts.record_runner_up) {
    OrbitDistance runner{std::numeric_limits<double>::infinity(), {}};
    for (std::size_t c = 0; c < coarse.size(); ++c) {
      if (distance(coarse[c], best.best_shift) <= 2.0 * spacing + 1e-12) continue;
      if (coarse_d[c] < runner.distance || (coarse_d[c] == runner.distance && coarse[c] < runner.best_shift)) {
        runner = {coarse_d[c], coarse[c]};
      }
    }
    if (std::isfinite(runner.distance)) out.runner_up = runner;
  }

  for (std::size_t level = 0; level < opts.refinements; ++level) {
    spacing *= 0.5;
    const std::vector<Vec3> fine = cube_lattice(best.best_shift, spacing, {-2, -2, -2}, {2, 2, 2});
    best = search(e, sol, fine);
  }
  out.shift = best.best_shift;
  out.distance = best.distance;
  out.resolution = spacing;
  return out;
}

std::array<double, 3> marginal_w1(const OccupationMeasure& mu, const PekarSolution& sol, const Vec3& shift) {
  const auto& g = sol.grid();
  const std::size_t n = g.size();
  const double h = g.dr();
  // tail(a) = int_a^inf m(z) dz for the marginal m(z) = 2 pi int_|z|^inf r psi^2
  std::vector<double> S(n + 1, 0.0);  // int_0^{jh} r psi^2
  for (std::size_t i = 0; i < n; ++i) {
    const double prev = i == 0 ? 0.0 : g.node(i - 1) * sol.psi0[i - 1] * sol.psi0[i - 1];
    S[i + 1] = S[i] + 0.5 * h * (prev + g.node(i) * sol.psi0[i] * sol.psi0[i]);
  }
  std::vector<double> m(n + 1);
  for (std::size_t j = 0; j <= n; ++j) m[j] = 2.0 * M_PI * (S[n] - S[j]);
  std::vector<double> tail(n + 1, 0.0);
  for (std::size_t j = n; j-- > 0;) tail[j] = tail[j + 1] + 0.5 * h * (m[j] + m[j + 1]);
  const double half = tail[0];  // 1/2 for a normalized psi
  auto ref_cdf = [&](double z) {
    const double a = std::min(std::abs(z), g.r_max());
    const double pos = a / h;
    const auto j = std::min(static_cast<std::size_t>(pos), n - 1);
    const double fr = pos - static_cast<double>(j);
    const double tl = (1.0 - fr) * tail[j] + fr * tail[j + 1];
    const double below = tl / (2.0 * half);
    return z <= 0.0 ? below : 1.0 - below;
  };

  std::array<double, 3> out{};
  const auto pts = mu.points();
  const auto w = mu.weights();
  std::vector<std::size_t> idx(pts.size());
  for (int axis = 0; axis < 3; ++axis) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return pts[a][axis] < pts[b][axis]; });
    const double c = shift[axis];
    const double zlo = std::min(pts[idx.front()][axis], c - g.r_max());
    const double zhi = std::max(pts[idx.back()][axis], c + g.r_max());
    const double dz = h;
    const auto steps = static_cast<std::size_t>(std::ceil((zhi - zlo) / dz));
    std::size_t k = 0;
    double fmu = 0.0;
    CompensatedSum acc;
    for (std::size_t s = 0; s < steps; ++s) {
      const double z = zlo + (static_cast<double>(s) + 0.5) * dz;
      while (k < idx.size() && pts[idx[k]][axis] <= z) fmu += w[idx[k++]];
      acc.add(std::abs(fmu - ref_cdf(z - c)) * dz);
    }
    out[static_cast<std::size_t>(axis)] = acc.value();
  }
  return out;
}

void write_measure_csv(std::ostream& os, const OccupationMeasure& mu) {
  os << "x,y,z,w\n" << std::setprecision(17);
  const auto p = mu.points();
  const auto w = mu.weights();
  for (std::size_t i = 0; i < p.size(); ++i) os << p[i].x << ',' << p[i].y << ',' << p[i].z << ',' << w[i] << '\n';
}

OccupationMeasure read_measure_csv(std::istream& is, double softening) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("x,y,z,w", 0) != 0) {
    throw std::invalid_argument("read_measure_csv: expected header x,y,z,w");
  }
  std::vector<Vec3> pts;
  std::vector<double> w;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    double v[4];
    for (double& x : v) {
      if (!std::getline(row, cell, ',')) throw std::invalid_argument("read_measure_csv: short row");
      x = std::stod(cell);
    }
    pts.push_back({v[0], v[1], v[2]});
    w.push_back(v[3]);
  }
  return OccupationMeasure(std::move(pts), std::move(w), softening);
}

nlohmann::json measure_sidecar(const OccupationMeasure& mu) {
  return {{"schema_version", 1}, {"eta", mu.softening()}, {"points", mu.size()}};
}

}  // namespace pekar
