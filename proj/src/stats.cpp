#include "fbsde/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fbsde/model.hpp"

namespace fbsde {

double pairwise_sum(std::span<const double> x) {
  if (x.size() <= 16) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t half = x.size() / 2;
  return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

double mean(std::span<const double> x) {
  if (x.empty()) throw Error("mean of an empty sample");
  return pairwise_sum(x) / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> x) {
  if (x.size() < 2) throw Error("variance needs at least two values");
  const double m = mean(x);
  std::vector<double> sq(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sq[i] = (x[i] - m) * (x[i] - m);
  return pairwise_sum(sq) / static_cast<double>(x.size() - 1);
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("linear_fit needs matching samples of size >= 2");
  const std::size_t n = x.size();
  const double mx = mean(x), my = mean(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw Error("linear_fit with constant abscissa");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - fit.intercept - fit.slope * x[i];
    rss += r * r;
  }
  fit.slope_se = n > 2 ? std::sqrt(rss / static_cast<double>(n - 2) / sxx) : 0.0;
  fit.r2 = syy > 0.0 ? 1.0 - rss / syy : 1.0;
  return fit;
}

JackknifeResult jackknife_variance(std::span<const double> x, int groups) {
  const std::size_t n = x.size();
  if (groups < 2 || n < static_cast<std::size_t>(2 * groups)) throw Error("jackknife needs at least 2 values per group");
  // Group sums of x and x^2 around a pilot mean keep the leave-out variances accurate.
  const double pilot = mean(x);
  std::vector<double> s1(groups), s2(groups);
  std::vector<std::size_t> cnt(groups);
  for (int g = 0; g < groups; ++g) {
    const std::size_t b = n * g / groups, e = n * (g + 1) / groups;
    std::vector<double> d(e - b), d2(e - b);
    for (std::size_t i = b; i < e; ++i) {
      d[i - b] = x[i] - pilot;
      d2[i - b] = d[i - b] * d[i - b];
    }
    s1[g] = pairwise_sum(d);
    s2[g] = pairwise_sum(d2);
    cnt[g] = e - b;
  }
  const double t1 = pairwise_sum(s1), t2 = pairwise_sum(s2);
  auto var_of = [](double a1, double a2, double m) { return (a2 - a1 * a1 / m) / (m - 1.0); };
  JackknifeResult r;
  r.estimate = var_of(t1, t2, static_cast<double>(n));
  std::vector<double> loo(groups);
  for (int g = 0; g < groups; ++g) loo[g] = var_of(t1 - s1[g], t2 - s2[g], static_cast<double>(n - cnt[g]));
  const double lm = mean(loo);
  double acc = 0.0;
  for (double v : loo) acc += (v - lm) * (v - lm);
  r.std_error = std::sqrt((groups - 1.0) / groups * acc);
  return r;
}

double binomial_se(double p, std::size_t n) {
  if (n == 0) return 0.0;
  return std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(n));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace fbsde
