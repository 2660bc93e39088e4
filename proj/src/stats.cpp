#include "moran/stats.hpp"

#include <algorithm>
#include <cmath>

#include "moran/rng.hpp"
#include "moran/types.hpp"

namespace moran::stats {

double mean(const std::vector<double>& xs) {
  if (xs.empty()) throw InvalidArgument("mean of an empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double variance(const std::vector<double>& xs) {
  if (xs.size() < 2) throw InvalidArgument("variance needs at least two values");
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

namespace {

double central_moment(const std::vector<double>& xs, int k) {
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += std::pow(x - m, k);
  return s / static_cast<double>(xs.size());
}

}  // namespace

double skewness(const std::vector<double>& xs) {
  const double m2 = central_moment(xs, 2);
  return m2 > 0.0 ? central_moment(xs, 3) / std::pow(m2, 1.5) : 0.0;
}

double excess_kurtosis(const std::vector<double>& xs) {
  const double m2 = central_moment(xs, 2);
  return m2 > 0.0 ? central_moment(xs, 4) / (m2 * m2) - 3.0 : 0.0;
}

double normal_cdf(double x, double mean, double sd) {
  return 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0)));
}

double ks_distance_normal(std::vector<double> xs, double mean, double sd) {
  if (xs.empty()) throw InvalidArgument("KS distance of an empty sample");
  if (!(sd > 0.0)) throw InvalidArgument("KS distance needs sd > 0");
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = normal_cdf(xs[i], mean, sd);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

Interval bootstrap_ci(const std::vector<double>& xs, const Statistic& stat,
                      std::size_t resamples, double level, std::uint64_t seed) {
  if (xs.empty()) throw InvalidArgument("bootstrap of an empty sample");
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("bootstrap level must be in (0, 1)");
  Rng rng(seed);
  std::vector<double> draws;
  draws.reserve(resamples);
  std::vector<double> sample(xs.size());
  for (std::size_t b = 0; b < resamples; ++b) {
    for (auto& v : sample) v = xs[rng.below(xs.size())];
    draws.push_back(stat(sample));
  }
  std::sort(draws.begin(), draws.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(draws.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const std::size_t j = std::min(i + 1, draws.size() - 1);
    return draws[i] + (pos - static_cast<double>(i)) * (draws[j] - draws[i]);
  };
  const double alpha = 0.5 * (1.0 - level);
  return {quantile(alpha), quantile(1.0 - alpha)};
}

LinearFit ols(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("ols needs >= 2 paired points");
  const double n = static_cast<double>(x.size());
  const double mx = mean(x), my = mean(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw InvalidArgument("ols needs distinct x values");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - fit.intercept - fit.slope * x[i];
    rss += r * r;
  }
  fit.slope_se = x.size() > 2 ? std::sqrt(rss / (n - 2.0) / sxx) : 0.0;
  fit.r2 = syy > 0.0 ? 1.0 - rss / syy : 1.0;
  return fit;
}

}  // namespace moran::stats
