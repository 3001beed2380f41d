#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>

#include "resopt/rng.hpp"

using resopt::CounterRng;
using resopt::inverse_normal_cdf;

TEST(InverseNormal, MatchesBoostQuantile) {
  const boost::math::normal_distribution<double> n01;
  for (double p : {1e-300, 1e-20, 1e-10, 1e-5, 0.001, 0.02425, 0.1, 0.3, 0.5, 0.5 + 1e-12, 0.7, 0.9, 0.975,
                   0.999, 1.0 - 1e-10}) {
    const double expected = boost::math::quantile(n01, p);
    EXPECT_NEAR(inverse_normal_cdf(p), expected, 1e-14 * std::max(1.0, std::abs(expected))) << "p=" << p;
  }
}

TEST(InverseNormal, RejectsOutOfRange) {
  EXPECT_THROW(inverse_normal_cdf(-0.1), std::domain_error);
  EXPECT_THROW(inverse_normal_cdf(1.5), std::domain_error);
  EXPECT_TRUE(std::isinf(inverse_normal_cdf(0.0)));
}

TEST(CounterRng, PureFunctionOfSeedStreamCounter) {
  const CounterRng a(42), b(42), c(43);
  for (std::uint64_t s = 0; s < 10; ++s)
    for (std::uint64_t k = 0; k < 10; ++k) {
      EXPECT_EQ(a.bits(s, k), b.bits(s, k));
      EXPECT_NE(a.bits(s, k), c.bits(s, k));
    }
}

TEST(CounterRng, UniformMoments) {
  const CounterRng rng(7);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform(i % 97, static_cast<std::uint64_t>(i));
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sq += u * u;
  }
  EXPECT_NEAR(sum / n, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
  EXPECT_NEAR(sq / n - (sum / n) * (sum / n), 1.0 / 12.0, 2e-3);
}
