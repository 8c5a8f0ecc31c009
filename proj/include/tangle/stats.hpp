#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

namespace tangle {

/// Sample mean with its standard error.
struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
  long samples = 0;

  /// Two-sided Student-t confidence interval.
  std::pair<double, double> ci(double level = 0.99) const {
    const double half = t_quantile(level) * std_error;
    return {mean - half, mean + half};
  }

  bool covers(double value, double level = 0.99) const {
    const auto [lo, hi] = ci(level);
    return value >= lo && value <= hi;
  }

  double z_score(double value) const { return (mean - value) / std_error; }

  double t_quantile(double level) const {
    if (samples < 2) return std::numeric_limits<double>::infinity();
    boost::math::students_t dist(static_cast<double>(samples - 1));
    return boost::math::quantile(dist, 0.5 + 0.5 * level);
  }
};

inline Estimate estimate(std::span<const double> xs) {
  Estimate e;
  e.samples = static_cast<long>(xs.size());
  if (xs.empty()) return e;
  double sum = 0.0;
  for (double x : xs) sum += x;
  e.mean = sum / xs.size();
  if (xs.size() < 2) {
    e.std_error = std::numeric_limits<double>::infinity();
    return e;
  }
  double ss = 0.0;
  for (double x : xs) ss += (x - e.mean) * (x - e.mean);
  e.std_error = std::sqrt(ss / (xs.size() - 1) / xs.size());
  return e;
}

/// sup_t |F_n(t) - F(t)| for sorted samples with F evaluated at each sample.
inline double ks_statistic(std::span<const double> sorted_cdf_values) {
  const double n = static_cast<double>(sorted_cdf_values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted_cdf_values.size(); ++i) {
    const double f = sorted_cdf_values[i];
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

/// Two-sample statistic sup |F_a - F_b|; inputs must be sorted.
inline double ks_two_sample(std::span<const double> a, std::span<const double> b) {
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

/// Asymptotic Kolmogorov critical value c(level) with P(sqrt(n) D > c) = 1 - level.
inline double ks_coefficient(double significance) {
  return std::sqrt(-0.5 * std::log(0.5 * significance));
}

inline double ks_critical(long n, double significance) {
  return ks_coefficient(significance) / std::sqrt(static_cast<double>(n));
}

inline double ks_critical_two_sample(long n, long m, double significance) {
  return ks_coefficient(significance) *
         std::sqrt(static_cast<double>(n + m) / (static_cast<double>(n) * m));
}

}  // namespace tangle
