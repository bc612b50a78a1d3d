#include <doctest.h>

#include <cmath>
#include <vector>

#include "rwz/rng.hpp"
#include "rwz/stats.hpp"

using namespace rwz;

TEST_CASE("derived seeds are stable and tag-sensitive") {
  CHECK(derive_seed(7, {1, 2}) == derive_seed(7, {1, 2}));
  CHECK(derive_seed(7, {1, 2}) != derive_seed(7, {2, 1}));
  CHECK(derive_seed(7, {1}) != derive_seed(8, {1}));
}

TEST_CASE("uniform and normal draws have the right first moments") {
  Rng rng(42);
  const int n = 200000;
  double su = 0.0, su2 = 0.0, sn = 0.0, sn2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    su += u;
    su2 += u * u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(su2 / n - 0.25 == doctest::Approx(1.0 / 12.0).epsilon(0.05));
  CHECK(std::abs(sn / n) < 0.01);
  CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("categorical respects the probability vector") {
  Rng rng(3);
  const std::vector<double> p = {0.2, 0.5, 0.3};
  std::vector<int> counts(3, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(rng.categorical(p))];
  for (int k = 0; k < 3; ++k) {
    const double se = std::sqrt(p[static_cast<std::size_t>(k)] *
                                (1 - p[static_cast<std::size_t>(k)]) / n);
    CHECK(std::abs(counts[static_cast<std::size_t>(k)] / double(n) -
                   p[static_cast<std::size_t>(k)]) < 5 * se);
  }
}

TEST_CASE("normal quantile matches the CDF") {
  for (double p : {0.001, 0.025, 0.2, 0.5, 0.8, 0.975, 0.999}) {
    CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
  }
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959964).epsilon(1e-6));
  CHECK_THROWS_AS(normal_quantile(0.0), ConfigError);
}

TEST_CASE("KS statistic is small for normal data, large for shifted data") {
  Rng rng(11);
  std::vector<double> z(5000);
  for (double& v : z) v = rng.normal();
  CHECK(ks_statistic_normal(z) < 0.03);
  for (double& v : z) v += 1.0;
  CHECK(ks_statistic_normal(z) > 0.3);
}

TEST_CASE("empirical quantile uses the order statistic") {
  std::vector<double> xs = {5.0, 1.0, 4.0, 2.0, 3.0};
  CHECK(empirical_quantile(xs, 0.5) == 3.0);
  CHECK(empirical_quantile(xs, 1.0) == 5.0);
  CHECK(empirical_quantile(xs, 0.2) == 1.0);
}
