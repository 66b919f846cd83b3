#pragma once

// Summary statistics, histograms and seeding helpers for the Monte Carlo
// modules.

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace pekar {

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double mean(std::span<const double> xs);
/// Unbiased sample variance.
double variance(std::span<const double> xs);
/// Standard error of the mean, treating samples as independent.
double standard_error(std::span<const double> xs);
double median(std::vector<double> xs);
/// Linear-interpolated quantile, q in [0, 1].
double quantile(std::vector<double> xs, double q);

/// Effective sample size from Geyer's initial monotone sequence estimator of
/// the integrated autocorrelation time.
double effective_sample_size(std::span<const double> xs);

/// Standard error of the mean corrected by the effective sample size.
double mcmc_standard_error(std::span<const double> xs);

/// Equal-width histogram on [lo, hi) with an implicit overflow mass.
struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> counts;
  double overflow = 0.0;  // samples outside [lo, hi)
  double total = 0.0;

  Histogram() = default;
  Histogram(double lo, double hi, std::size_t bins);

  std::size_t bins() const { return counts.size(); }
  double width() const { return (hi - lo) / static_cast<double>(counts.size()); }
  double center(std::size_t b) const { return lo + (static_cast<double>(b) + 0.5) * width(); }
  void add(double x, double weight = 1.0);
  /// Associative merge; both histograms must share the binning.
  void merge(const Histogram& other);
};

/// L1 distance between the empirical bin probabilities of `samples` and the
/// reference bin probabilities; the overflow bin (outside [lo, hi)) counts as
/// one extra bin whose reference mass is 1 - sum(reference).
double l1_distance(const Histogram& h, std::span<const double> reference_probabilities);

/// Bin probabilities of a reference CDF over the histogram bins.
std::vector<double> bin_probabilities(const Histogram& h, const std::function<double(double)>& cdf);

struct BootstrapResult {
  double estimate = 0.0;
  double standard_error = 0.0;
};

/// L1 distance of the histogram of `samples` to the reference, with a
/// nonparametric bootstrap standard error.
BootstrapResult bootstrap_l1(std::span<const double> samples, double lo, double hi, std::size_t bins,
                             std::span<const double> reference_probabilities, std::size_t resamples,
                             std::uint64_t seed);

/// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b);

/// SplitMix64 output for (root, stream). Used to derive independent seeds.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream);

}  // namespace pekar
