#pragma once

// Reference values computed independently of the library code paths.

#include <cmath>
#include <cstdint>
#include <vector>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

namespace oracle {

// P[X1 + X2 > x] for X1, X2 iid Pareto(1, 1), by partial fractions of the convolution:
// P = P[X1 > x - 1] + int_1^{x-1} t^-2 (x - t)^-1 dt = 2/x + (2/x^2) log(x - 1).
inline double two_pareto_sum_tail(double x) { return 2.0 / x + 2.0 / (x * x) * std::log(x - 1.0); }

// Same quantity by adaptive quadrature of the density convolution.
inline double two_pareto_sum_tail_quadrature(double x) {
  auto integrand = [x](double t) { return 1.0 / (t * t) / (x - t); };
  boost::math::quadrature::tanh_sinh<double> ts;
  const double inner = ts.integrate(integrand, 1.0, x - 1.0);
  return 1.0 / (x - 1.0) + inner;
}

inline double normal_upper_tail(double z) {
  return boost::math::cdf(boost::math::complement(boost::math::normal(), z));
}

inline double normal_quantile(double p) { return boost::math::quantile(boost::math::normal(), p); }

// P[Bin(trials, p) >= k].
inline double binomial_upper(std::uint64_t k, std::uint64_t trials, double p) {
  if (k == 0) {
    return 1.0;
  }
  if (p >= 1.0) {
    return 1.0;
  }
  if (p <= 0.0) {
    return 0.0;
  }
  boost::math::binomial bin(static_cast<double>(trials), p);
  return boost::math::cdf(boost::math::complement(bin, static_cast<double>(k - 1)));
}

// Closed-form OLS by normal equations on raw sums (no centering trick shared with the library).
struct Line {
  double intercept;
  double slope;
};

inline Line least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  long double n = static_cast<long double>(x.size());
  long double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += static_cast<long double>(x[i]) * x[i];
    sxy += static_cast<long double>(x[i]) * y[i];
  }
  const long double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return {static_cast<double>((sy - slope * sx) / n), static_cast<double>(slope)};
}

}  // namespace oracle
