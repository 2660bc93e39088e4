#ifndef MORAN_STATS_HPP
#define MORAN_STATS_HPP

#include <cstdint>
#include <functional>
#include <vector>

namespace moran::stats {

double mean(const std::vector<double>& xs);
/// Unbiased sample variance (n - 1 denominator).
double variance(const std::vector<double>& xs);
double skewness(const std::vector<double>& xs);
double excess_kurtosis(const std::vector<double>& xs);

double normal_cdf(double x, double mean = 0.0, double sd = 1.0);
/// sup_x |F_n(x) - Phi((x - mean) / sd)|.
double ks_distance_normal(std::vector<double> xs, double mean, double sd);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

using Statistic = std::function<double(const std::vector<double>&)>;

/// Percentile bootstrap interval for `stat`, resampling with a seeded RNG.
Interval bootstrap_ci(const std::vector<double>& xs, const Statistic& stat,
                      std::size_t resamples, double level, std::uint64_t seed);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double r2 = 0.0;
};

/// Ordinary least squares y = intercept + slope x; needs >= 2 distinct x.
LinearFit ols(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace moran::stats

#endif  // MORAN_STATS_HPP
