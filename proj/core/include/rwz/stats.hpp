#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "rwz/error.hpp"

namespace rwz {

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x * 0.7071067811865475244);
}

// Inverse standard normal CDF (Acklam's rational approximation refined by one
// Halley step; |relative error| < 1e-15 over (0,1)).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("normal_quantile: p outside (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley refinement against the exact CDF.
  const double e = normal_cdf(x) - p;
  const double u = e * 2.506628274631000502415765 * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

inline double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

inline double variance_of(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

inline double stderr_of(std::span<const double> xs) {
  return std::sqrt(variance_of(xs) / static_cast<double>(xs.size()));
}

// Order-statistic empirical quantile: the ceil(p*n)-th smallest value.
inline double empirical_quantile(std::vector<double> xs, double p) {
  if (xs.empty()) throw ConfigError("empirical_quantile: empty sample");
  std::sort(xs.begin(), xs.end());
  const auto n = static_cast<double>(xs.size());
  auto rank = static_cast<std::size_t>(std::ceil(p * n));
  rank = std::min(std::max<std::size_t>(rank, 1), xs.size());
  return xs[rank - 1];
}

// Two-sided Kolmogorov-Smirnov statistic against the standard normal.
inline double ks_statistic_normal(std::vector<double> xs) {
  if (xs.empty()) throw ConfigError("ks_statistic_normal: empty sample");
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = normal_cdf(xs[i]);
    const double hi = (static_cast<double>(i) + 1.0) / n - f;
    const double lo = f - static_cast<double>(i) / n;
    d = std::max(d, std::max(hi, lo));
  }
  return d;
}

}  // namespace rwz
