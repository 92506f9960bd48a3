#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "delaysense/error.hpp"

namespace delaysense {

namespace detail {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 100000;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEps) return h;
  }
  throw Error(ErrorCode::NoConvergence, "incomplete beta continued fraction did not converge");
}

inline double log_beta_prefactor(double a, double b, double x) {
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
         b * std::log1p(-x);
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0) || !(x >= 0.0 && x <= 1.0)) {
    throw Error(ErrorCode::DomainError, "incomplete_beta requires a,b > 0 and 0 <= x <= 1");
  }
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double front = std::exp(detail::log_beta_prefactor(a, b, x));
  // The fraction converges fast only below the mean; use the symmetry
  // I_x(a,b) = 1 - I_{1-x}(b,a) on the other side.
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * detail::beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

namespace detail {

inline void check_df(double d1, double d2) {
  if (!(d1 > 0.0) || !(d2 > 0.0) || std::isinf(d1) || std::isinf(d2)) {
    throw Error(ErrorCode::DomainError, "F distribution degrees of freedom must be positive and finite");
  }
}

}  // namespace detail

inline double f_cdf(double x, double d1, double d2) {
  detail::check_df(d1, d2);
  if (std::isnan(x) || x < 0.0) throw Error(ErrorCode::DomainError, "F cdf requires x >= 0");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  const double z = d1 * x / (d1 * x + d2);
  return incomplete_beta(d1 / 2.0, d2 / 2.0, z);
}

/// Upper tail 1 - cdf, evaluated without cancellation for small p-values.
inline double f_survival(double x, double d1, double d2) {
  detail::check_df(d1, d2);
  if (std::isnan(x) || x < 0.0) throw Error(ErrorCode::DomainError, "F survival requires x >= 0");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  const double z = d2 / (d2 + d1 * x);
  return incomplete_beta(d2 / 2.0, d1 / 2.0, z);
}

inline double f_quantile(double q, double d1, double d2) {
  detail::check_df(d1, d2);
  if (!(q > 0.0 && q < 1.0)) throw Error(ErrorCode::DomainError, "F quantile requires 0 < q < 1");
  double lo = 0.0;
  double hi = 1.0;
  while (f_cdf(hi, d1, d2) < q) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) throw Error(ErrorCode::NoConvergence, "F quantile bracket overflow");
  }
  // Bisection keeps the inverse monotone in q; 200 halvings exhaust double precision.
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (f_cdf(mid, d1, d2) < q) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace delaysense
