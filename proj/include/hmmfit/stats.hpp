#pragma once

#include <span>
#include <vector>

namespace hmmfit::stats {

/// Standard normal quantile.
double normal_quantile(double p);

/// Chi-square quantile with `df` degrees of freedom.
double chisq_quantile(double p, double df);

/// Sample quantile, linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be ascending and non-empty.
double quantile_sorted(std::span<const double> sorted, double p);

/// Copies, sorts and takes the type-7 quantile.
double quantile(std::vector<double> values, double p);

double mean(std::span<const double> v);

/// Sample standard deviation (n - 1 denominator); 0 for n < 2.
double sample_sd(std::span<const double> v);

}  // namespace hmmfit::stats
