#include "pekar/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace pekar {

double mean(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean: empty sample");
  CompensatedSum s;
  for (double x : xs) s.add(x);
  return s.value() / static_cast<double>(xs.size());
}

double variance(std::span<const double> xs) {
  if (xs.size() < 2) throw std::invalid_argument("variance: need at least two samples");
  const double m = mean(xs);
  CompensatedSum s;
  for (double x : xs) s.add((x - m) * (x - m));
  return s.value() / static_cast<double>(xs.size() - 1);
}

double standard_error(std::span<const double> xs) {
  return std::sqrt(variance(xs) / static_cast<double>(xs.size()));
}

double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw std::invalid_argument("quantile: empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return (1.0 - w) * xs[lo] + w * xs[hi];
}

double effective_sample_size(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n < 4) return static_cast<double>(n);
  const double m = mean(xs);
  std::vector<double> c(xs.size());
  for (std::size_t i = 0; i < n; ++i) c[i] = xs[i] - m;
  auto autocov = [&](std::size_t lag) {
    CompensatedSum s;
    for (std::size_t i = 0; i + lag < n; ++i) s.add(c[i] * c[i + lag]);
    return s.value() / static_cast<double>(n);
  };
  const double c0 = autocov(0);
  if (!(c0 > 0.0)) return static_cast<double>(n);

  // Geyer: sums of adjacent pairs of autocorrelations, truncated at the first
  // non-positive pair and forced monotone.
  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double pair = (autocov(2 * k) + autocov(2 * k + 1)) / c0;
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  tau = std::max(tau, 1.0 / static_cast<double>(n));
  return std::min(static_cast<double>(n), static_cast<double>(n) / tau);
}

double mcmc_standard_error(std::span<const double> xs) {
  return std::sqrt(variance(xs) / effective_sample_size(xs));
}

Histogram::Histogram(double lo_, double hi_, std::size_t bins) : lo(lo_), hi(hi_), counts(bins, 0.0) {
  if (!(hi > lo) || bins == 0) throw std::invalid_argument("Histogram: need hi > lo and bins > 0");
}

void Histogram::add(double x, double weight) {
  total += weight;
  if (!(x >= lo) || !(x < hi)) {
    overflow += weight;
    return;
  }
  auto b = static_cast<std::size_t>((x - lo) / width());
  if (b >= counts.size()) b = counts.size() - 1;
  counts[b] += weight;
}

void Histogram::merge(const Histogram& other) {
  if (other.lo != lo || other.hi != hi || other.counts.size() != counts.size()) {
    throw std::invalid_argument("Histogram::merge: binning mismatch");
  }
  for (std::size_t b = 0; b < counts.size(); ++b) counts[b] += other.counts[b];
  overflow += other.overflow;
  total += other.total;
}

double l1_distance(const Histogram& h, std::span<const double> reference) {
  if (reference.size() != h.bins()) throw std::invalid_argument("l1_distance: bin count mismatch");
  if (!(h.total > 0.0)) throw std::invalid_argument("l1_distance: empty histogram");
  double d = 0.0;
  double ref_mass = 0.0;
  for (std::size_t b = 0; b < h.bins(); ++b) {
    d += std::abs(h.counts[b] / h.total - reference[b]);
    ref_mass += reference[b];
  }
  d += std::abs(h.overflow / h.total - std::max(0.0, 1.0 - ref_mass));
  return d;
}

std::vector<double> bin_probabilities(const Histogram& h, const std::function<double(double)>& cdf) {
  std::vector<double> p(h.bins());
  for (std::size_t b = 0; b < h.bins(); ++b) {
    const double a = h.lo + static_cast<double>(b) * h.width();
    p[b] = cdf(a + h.width()) - cdf(a);
  }
  return p;
}

BootstrapResult bootstrap_l1(std::span<const double> samples, double lo, double hi, std::size_t bins,
                             std::span<const double> reference, std::size_t resamples,
                             std::uint64_t seed) {
  Histogram base(lo, hi, bins);
  for (double x : samples) base.add(x);
  BootstrapResult out;
  out.estimate = l1_distance(base, reference);
  if (resamples < 2 || samples.empty()) return out;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  std::vector<double> stats(resamples);
  for (std::size_t r = 0; r < resamples; ++r) {
    Histogram hb(lo, hi, bins);
    for (std::size_t i = 0; i < samples.size(); ++i) hb.add(samples[pick(rng)]);
    stats[r] = l1_distance(hb, reference);
  }
  out.standard_error = std::sqrt(variance(stats));
  return out;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_statistic: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  std::uint64_t z = root + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace pekar
