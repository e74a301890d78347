#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "heavytail/distribution.hpp"
#include "heavytail/error.hpp"
#include "heavytail/estimators.hpp"
#include "heavytail/factor_model.hpp"

namespace heavytail {

/// (sum_i c_i) * tail_F(x): the first-order approximation of P[S_N > x].
[[nodiscard]] inline double asymptotic_sum_tail(const FactorModel& model, double x) {
  if (!(x > 0.0)) {
    throw DomainError("asymptotic_sum_tail: x must be positive");
  }
  return model.coefficient_sum() * model.reference_tail().tail(x);
}

/// sum_i P[X_i > x]; the middle term of the tail-equivalence chain.
[[nodiscard]] inline double sum_of_marginal_tails(const FactorModel& model, double x) {
  double s = 0.0;
  for (const auto& f : model.factors()) {
    s += f.tail(x);
  }
  return s;
}

struct MaxTailBounds {
  double lower;
  double upper;
  /// 1 - prod_i (1 - tail_i(x)), computed through log1p.
  double exact;
};

[[nodiscard]] inline MaxTailBounds max_tail_bounds(const FactorModel& model, double x) {
  if (!(x > 0.0)) {
    throw DomainError("max_tail_bounds: x must be positive");
  }
  double sum = 0.0;
  double log_none = 0.0;
  for (const auto& f : model.factors()) {
    const double t = f.tail(x);
    sum += t;
    log_none += std::log1p(-t);
  }
  const double exact = -std::expm1(log_none);
  return {sum, sum / (1.0 - std::exp(-1.0)), exact};
}

enum class BoundKind { Clt, Markov, SubGaussian, SubGaussianExact };

[[nodiscard]] inline std::string_view to_string(BoundKind k) noexcept {
  switch (k) {
    case BoundKind::Clt:
      return "clt";
    case BoundKind::Markov:
      return "markov";
    case BoundKind::SubGaussian:
      return "subgaussian";
    case BoundKind::SubGaussianExact:
      return "subgaussian_exact";
  }
  return "unknown";
}

/// A concentration bound and the inputs it was computed from.
///
/// Markov and sub-Gaussian values can exceed 1; a vacuous bound is reported as is.
struct BoundReport {
  BoundKind kind;
  double value;
  std::uint64_t n;
  double kappa;
  std::uint64_t factor_count;
  double alpha;
  double x = std::nan("");
};

namespace detail {

inline void check_bound_inputs(std::uint64_t n, std::uint64_t factors, double alpha) {
  if (n < 1) {
    throw DomainError("deviation bound: n must be >= 1");
  }
  if (factors < 1) {
    throw DomainError("deviation bound: N must be >= 1");
  }
  if (!(alpha > 0.0)) {
    throw DomainError("deviation bound: alpha must be positive");
  }
}

inline double heaviness(std::uint64_t factors, double alpha) {
  return std::pow(static_cast<double>(factors), 2.0 * alpha);
}

}  // namespace detail

/// Asymptotic lower bound on P[|Zbar_n - mu| <= kappa mu]: 2 Phi(kappa sqrt(n) / N^alpha) - 1.
[[nodiscard]] inline BoundReport clt_coverage(std::uint64_t n, double kappa, std::uint64_t factors, double alpha) {
  detail::check_bound_inputs(n, factors, alpha);
  if (!(kappa > 0.0 && kappa < 1.0)) {
    throw DomainError("clt_coverage: kappa must lie in (0, 1)");
  }
  const double z = kappa * std::sqrt(static_cast<double>(n)) / std::pow(static_cast<double>(factors), alpha);
  return {BoundKind::Clt, 2.0 * normal_cdf(z) - 1.0, n, kappa, factors, alpha};
}

/// Chebyshev-type bound N^{2 alpha} / (kappa^2 n) on the deviation probability.
[[nodiscard]] inline BoundReport markov_deviation_bound(std::uint64_t n, double kappa, std::uint64_t factors,
                                                        double alpha) {
  detail::check_bound_inputs(n, factors, alpha);
  const double value = detail::heaviness(factors, alpha) / (kappa * kappa * static_cast<double>(n));
  return {BoundKind::Markov, value, n, kappa, factors, alpha};
}

/// Hoeffding bound for Z in [0, N^alpha mu] in its asymptotic form 2 exp(-2 n kappa^2 / N^{2 alpha}).
[[nodiscard]] inline BoundReport subgaussian_deviation_bound(std::uint64_t n, double kappa, std::uint64_t factors,
                                                             double alpha) {
  detail::check_bound_inputs(n, factors, alpha);
  const double value =
      2.0 * std::exp(-2.0 * static_cast<double>(n) * kappa * kappa / detail::heaviness(factors, alpha));
  return {BoundKind::SubGaussian, value, n, kappa, factors, alpha};
}

/// Hoeffding bound with the exact range of Z: 2 exp(-2 n kappa^2 mu^2 / (sum_i tail_i(x/N))^2).
[[nodiscard]] inline BoundReport subgaussian_deviation_bound_exact(std::uint64_t n, double kappa, double mu,
                                                                   const FactorModel& model, double x) {
  if (n < 1) {
    throw DomainError("deviation bound: n must be >= 1");
  }
  const double range = cmc_envelope(model, x);
  const double value = 2.0 * std::exp(-2.0 * static_cast<double>(n) * kappa * kappa * mu * mu / (range * range));
  return {BoundKind::SubGaussianExact, value, n, kappa, model.size(), model.alpha_min(), x};
}

/// Slowly varying factor L(y) = k (log y)^p; p = 0 gives the constant k.
struct SlowlyVarying {
  double p = 0.0;
  double k = 1.0;

  [[nodiscard]] double operator()(double y) const {
    if (p == 0.0) {
      return k;
    }
    if (!(y > 1.0)) {
      throw DomainError("slowly varying (log y)^p needs y > 1");
    }
    return k * std::pow(std::log(y), p);
  }
};

/// c L(M x) / (M^{alpha - 1} x^alpha): the large-portfolio bound on P[(1/M) sum eps_i > x].
[[nodiscard]] inline double residual_aggregate_bound(double c, double alpha, std::uint64_t m, double x,
                                                     SlowlyVarying slowly = {}) {
  if (!(alpha > 1.0)) {
    throw PropositionInapplicableError("residual_aggregate_bound: needs alpha > 1");
  }
  if (m < 1 || !(x > 0.0) || !(c >= 0.0)) {
    throw DomainError("residual_aggregate_bound: needs M >= 1, x > 0, c >= 0");
  }
  const double md = static_cast<double>(m);
  return c * slowly(md * x) / (std::pow(md, alpha - 1.0) * std::pow(x, alpha));
}

}  // namespace heavytail
