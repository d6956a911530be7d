#pragma once

// Frequentist tests used by the experiment analysis.

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <span>
#include <string>

#include "parlab/core.hpp"

namespace parlab::stats {

inline constexpr double kZ975 = 1.959963984540054;

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Two-sided p-value of a standard normal statistic.
inline double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

inline Interval wald_interval(std::size_t successes, std::size_t n, double z = kZ975) {
  if (n == 0) throw Error("wald interval: empty sample");
  const double p = static_cast<double>(successes) / static_cast<double>(n);
  const double half = z * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
  return {p - half, p + half};
}

struct ProportionTest {
  double difference = 0.0;  // p_b - p_a
  double z = 0.0;
  double p_value = 1.0;
};

/// Pooled-variance two-proportion z-test of group b against group a.
inline ProportionTest two_proportion_z(std::size_t success_a, std::size_t n_a, std::size_t success_b,
                                       std::size_t n_b) {
  if (n_a == 0 || n_b == 0) throw Error("two-proportion test: empty group");
  const double na = static_cast<double>(n_a), nb = static_cast<double>(n_b);
  const double pa = static_cast<double>(success_a) / na, pb = static_cast<double>(success_b) / nb;
  const double pooled = static_cast<double>(success_a + success_b) / (na + nb);
  const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb));
  ProportionTest t;
  t.difference = pb - pa;
  if (se > 0) {
    t.z = t.difference / se;
    t.p_value = normal_two_sided_p(t.z);
  }
  return t;
}

struct ChiSquare {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Pearson chi-square (1 df, no continuity correction) on the 2x2 table
/// [success_a, n_a - success_a; success_b, n_b - success_b].
inline ChiSquare chi_square_2x2(std::size_t success_a, std::size_t n_a, std::size_t success_b, std::size_t n_b) {
  if (n_a == 0 || n_b == 0) throw Error("chi-square: empty group");
  const double a = static_cast<double>(success_a), b = static_cast<double>(n_a - success_a);
  const double c = static_cast<double>(success_b), d = static_cast<double>(n_b - success_b);
  const double n = a + b + c + d;
  const double denom = (a + b) * (c + d) * (a + c) * (b + d);
  ChiSquare out;
  if (denom > 0) {
    const double diff = a * d - b * c;
    out.statistic = n * diff * diff / denom;
    // chi-square with 1 df is a squared standard normal
    out.p_value = std::erfc(std::sqrt(out.statistic / 2.0));
  }
  return out;
}

struct MeanSummary {
  double mean = 0.0;
  double variance = 0.0;  // unbiased; 0 when n < 2
  std::size_t n = 0;
};

inline MeanSummary summarize(std::span<const double> xs) {
  MeanSummary s;
  s.n = xs.size();
  if (s.n == 0) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(s.n);
  if (s.n > 1) {
    for (double x : xs) s.variance += (x - s.mean) * (x - s.mean);
    s.variance /= static_cast<double>(s.n - 1);
  }
  return s;
}

struct WelchT {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

/// Welch's unequal-variance t-test of b against a. Both groups need n >= 2.
inline WelchT welch_t(const MeanSummary& a, const MeanSummary& b) {
  if (a.n < 2 || b.n < 2) throw Error("welch t-test needs at least 2 observations per group");
  const double va = a.variance / static_cast<double>(a.n), vb = b.variance / static_cast<double>(b.n);
  WelchT out;
  const double se2 = va + vb;
  if (se2 <= 0) {
    // both groups constant: identical means give no evidence, different means are certain
    out.df = static_cast<double>(a.n + b.n - 2);
    if (a.mean != b.mean) {
      out.t = b.mean > a.mean ? INFINITY : -INFINITY;
      out.p_value = 0.0;
    }
    return out;
  }
  out.t = (b.mean - a.mean) / std::sqrt(se2);
  out.df = se2 * se2 /
           (va * va / static_cast<double>(a.n - 1) + vb * vb / static_cast<double>(b.n - 1));
  const boost::math::students_t dist(out.df);
  out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t)));
  return out;
}

}  // namespace parlab::stats
