#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <vector>

#include "fbsde/parallel.hpp"
#include "fbsde/rng.hpp"
#include "fbsde/stats.hpp"

using namespace fbsde;

TEST_CASE("pairwise sum and mean of simple sequences") {
  std::vector<double> x(1000);
  std::iota(x.begin(), x.end(), 1.0);
  CHECK(pairwise_sum(x) == 500500.0);
  CHECK(mean(x) == 500.5);
  CHECK_THROWS(mean(std::vector<double>{}));
}

TEST_CASE("sample variance is unbiased and shift invariant") {
  const std::vector<double> x{1.0, 2.0, 4.0, 7.0};
  // mean 3.5, squared deviations 6.25 2.25 0.25 12.25.
  CHECK(sample_variance(x) == doctest::Approx(21.0 / 3.0));
  std::vector<double> y = x;
  for (double& v : y) v += 1e9;
  CHECK(sample_variance(y) == doctest::Approx(7.0).epsilon(1e-6));
}

TEST_CASE("linear fit recovers an exact line") {
  const std::vector<double> x{0.0, 1.0, 2.0, 3.0};
  const std::vector<double> y{1.0, 3.0, 5.0, 7.0};
  const LinearFit f = linear_fit(x, y);
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK(f.slope_se == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(f.r2 == doctest::Approx(1.0));
}

TEST_CASE("jackknife error of a Gaussian variance is near its asymptotic value") {
  GaussianStream g(3, 0);
  std::vector<double> x(20000);
  for (double& v : x) v = 2.0 * g();
  const JackknifeResult jk = jackknife_variance(x, 20);
  CHECK(jk.estimate == doctest::Approx(4.0).epsilon(0.05));
  // sd of the sample variance: sigma^2 sqrt(2 / (n - 1)).
  const double theory = 4.0 * std::sqrt(2.0 / (x.size() - 1.0));
  CHECK(jk.std_error > 0.5 * theory);
  CHECK(jk.std_error < 1.6 * theory);
}

TEST_CASE("binomial standard error and normal cdf") {
  CHECK(binomial_se(0.5, 100) == doctest::Approx(0.05));
  CHECK(binomial_se(0.0, 100) == 0.0);
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-9));
}

TEST_CASE("stream generator is a pure function of seed, stream and counter") {
  StreamRng a(7, 3), b(7, 3), c(7, 4), d(8, 3);
  for (int i = 0; i < 100; ++i) {
    const auto x = a();
    REQUIRE(x == b());
    REQUIRE(x != c());
    REQUIRE(x != d());
  }
  StreamRng u(1, 1);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    REQUIRE(v >= 0.0);
    REQUIRE(v < 1.0);
  }
}

TEST_CASE("parallel_for visits every index exactly once") {
  for (int threads : {1, 3, 8}) {
    std::vector<std::atomic<int>> hits(1001);
    parallel_for(hits.size(), threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) hits[i]++;
    });
    CHECK(std::all_of(hits.begin(), hits.end(), [](const auto& h) { return h.load() == 1; }));
  }
}
