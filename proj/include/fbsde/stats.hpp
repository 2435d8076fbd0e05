#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fbsde {

/// Recursive pairwise summation; the result depends only on the input order.
double pairwise_sum(std::span<const double> x);
double mean(std::span<const double> x);
/// Unbiased sample variance computed around the mean (two-pass).
double sample_variance(std::span<const double> x);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double r2 = 0.0;
};

/// Ordinary least squares y = intercept + slope x; needs at least 2 points.
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

struct JackknifeResult {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Delete-one-group jackknife of the sample variance with `groups` contiguous groups.
JackknifeResult jackknife_variance(std::span<const double> x, int groups = 20);

/// sqrt(p (1 - p) / n).
double binomial_se(double p, std::size_t n);

double normal_cdf(double x);

}  // namespace fbsde
