#include "hmmfit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "hmmfit/error.hpp"

namespace hmmfit::stats {

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 1.0) return HUGE_VAL;
    if (p == 0.0) return -HUGE_VAL;
    throw HmmError(ErrorCode::InvalidArgument, "probability must lie in [0, 1]");
  }
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double chisq_quantile(double p, double df) {
  if (!(p >= 0.0 && p <= 1.0) || !(df > 0.0)) {
    throw HmmError(ErrorCode::InvalidArgument, "chi-square quantile: bad arguments");
  }
  if (p == 1.0) return HUGE_VAL;
  if (p == 0.0) return 0.0;
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(df), p);
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw HmmError(ErrorCode::EmptyData, "quantile of empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw HmmError(ErrorCode::InvalidArgument, "quantile level outside [0, 1]");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double quantile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, p);
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean(v);
  double ss = 0.0;
  for (double e : v) ss += (e - mu) * (e - mu);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace hmmfit::stats
