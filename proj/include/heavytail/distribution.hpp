#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/tools/roots.hpp>

#include "heavytail/error.hpp"
#include "heavytail/random.hpp"

namespace heavytail {

enum class DistributionKind { Pareto, ShiftedPareto, LogPareto, Gaussian };

[[nodiscard]] inline std::string_view to_string(DistributionKind kind) noexcept {
  switch (kind) {
    case DistributionKind::Pareto:
      return "pareto";
    case DistributionKind::ShiftedPareto:
      return "shifted_pareto";
    case DistributionKind::LogPareto:
      return "log_pareto";
    case DistributionKind::Gaussian:
      return "gaussian";
  }
  return "unknown";
}

/// Standard normal upper tail 1 - Phi(z), accurate far into the tail.
[[nodiscard]] inline double normal_upper_tail(double z) noexcept {
  return 0.5 * std::erfc(z / std::numbers::sqrt2);
}

[[nodiscard]] inline double normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Phi^{-1}(u) for u in (0, 1).
[[nodiscard]] inline double normal_quantile(double u) {
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
}

/// A one-dimensional factor distribution with a closed-form tail.
///
/// Kinds:
///  - Pareto:        tail(t) = (x_m / t)^alpha for t > x_m, 1 below.
///  - ShiftedPareto: a Pareto translated by `shift`; regularly varying with the same index.
///  - LogPareto:     tail(t) = (log t)^p t^-alpha for t >= threshold, 1 below. When the
///                   formula is below 1 at the threshold the remaining mass sits as an atom
///                   on the threshold itself.
///  - Gaussian:      Normal(shift, sigma^2); used for the index model and as a light-tailed factor.
///
/// Instances are immutable and cheap to copy.
class FactorDistribution {
public:
  static FactorDistribution pareto(double alpha, double scale = 1.0) {
    return FactorDistribution(DistributionKind::Pareto, alpha, scale, 0.0, 0.0);
  }

  static FactorDistribution shifted_pareto(double alpha, double scale, double shift) {
    return FactorDistribution(DistributionKind::ShiftedPareto, alpha, scale, shift, 0.0);
  }

  /// Smallest threshold of the form e^k (k >= 1) for which the tail formula is a valid
  /// non-increasing survival function; e for p <= alpha.
  static double default_log_pareto_threshold(double alpha, double p) {
    double log_t = std::max(1.0, p / alpha);
    while (p * std::log(log_t) - alpha * log_t > 0.0) {
      log_t += 1.0;
    }
    return std::exp(log_t);
  }

  static FactorDistribution log_pareto(double alpha, double p, double threshold) {
    return FactorDistribution(DistributionKind::LogPareto, alpha, threshold, 0.0, p);
  }

  static FactorDistribution log_pareto(double alpha, double p) {
    return log_pareto(alpha, p, default_log_pareto_threshold(alpha, p));
  }

  static FactorDistribution gaussian(double sigma, double mean = 0.0) {
    return FactorDistribution(DistributionKind::Gaussian, 0.0, sigma, mean, 0.0);
  }

  [[nodiscard]] DistributionKind kind() const noexcept { return kind_; }
  /// Tail index; zero for Gaussian.
  [[nodiscard]] double alpha() const noexcept { return alpha_; }
  /// x_m for the Pareto kinds, the support threshold for LogPareto, sigma for Gaussian.
  [[nodiscard]] double scale() const noexcept { return scale_; }
  /// Location shift (the mean for Gaussian).
  [[nodiscard]] double shift() const noexcept { return shift_; }
  [[nodiscard]] double sigma() const noexcept { return scale_; }
  /// Exponent p of the slowly varying factor (log t)^p; zero except for LogPareto.
  [[nodiscard]] double log_exponent() const noexcept { return log_exponent_; }

  [[nodiscard]] bool is_regularly_varying() const noexcept { return kind_ != DistributionKind::Gaussian; }
  [[nodiscard]] bool has_density() const noexcept { return kind_ != DistributionKind::LogPareto; }

  /// Left end of the support (-inf for Gaussian).
  [[nodiscard]] double support_lower() const noexcept {
    if (kind_ == DistributionKind::Gaussian) {
      return -std::numeric_limits<double>::infinity();
    }
    return scale_ + shift_;
  }

  /// P[X > t]. Defined on the whole real line.
  [[nodiscard]] double tail(double t) const noexcept {
    switch (kind_) {
      case DistributionKind::Pareto:
      case DistributionKind::ShiftedPareto: {
        const double z = t - shift_;
        if (!(z > scale_)) {
          return 1.0;
        }
        return std::pow(scale_ / z, alpha_);
      }
      case DistributionKind::LogPareto:
        if (!(t >= scale_)) {
          return 1.0;
        }
        return log_pareto_formula(t);
      case DistributionKind::Gaussian:
        return normal_upper_tail((t - shift_) / scale_);
    }
    return 1.0;
  }

  [[nodiscard]] double cdf(double t) const noexcept { return 1.0 - tail(t); }

  /// Inverse CDF: smallest t with P[X <= t] >= u. Throws DomainError unless 0 < u < 1.
  [[nodiscard]] double quantile(double u) const {
    if (!(u > 0.0 && u < 1.0)) {
      throw DomainError("quantile: probability must lie in (0, 1), got " + std::to_string(u));
    }
    switch (kind_) {
      case DistributionKind::Pareto:
      case DistributionKind::ShiftedPareto:
        return shift_ + scale_ * std::pow(1.0 - u, -1.0 / alpha_);
      case DistributionKind::LogPareto:
        return log_pareto_quantile(1.0 - u);
      case DistributionKind::Gaussian:
        return shift_ + scale_ * normal_quantile(u);
    }
    return 0.0;
  }

  /// Probability density; the LogPareto kind carries an atom and has none.
  [[nodiscard]] double density(double t) const {
    switch (kind_) {
      case DistributionKind::Pareto:
      case DistributionKind::ShiftedPareto: {
        const double z = t - shift_;
        if (!(z > scale_)) {
          return 0.0;
        }
        return alpha_ / z * std::pow(scale_ / z, alpha_);
      }
      case DistributionKind::Gaussian: {
        const double z = (t - shift_) / scale_;
        return std::exp(-0.5 * z * z) / (scale_ * std::sqrt(2.0 * std::numbers::pi));
      }
      case DistributionKind::LogPareto:
        throw UnsupportedModelError("log_pareto has a point mass at its threshold and no density");
    }
    return 0.0;
  }

  /// One variate by inverse-CDF sampling on a uniform draw from `rng`.
  double sample(RandomStream& rng) const { return quantile(rng.uniform()); }

private:
  FactorDistribution(DistributionKind kind, double alpha, double scale, double shift, double p)
      : kind_(kind), alpha_(alpha), scale_(scale), shift_(shift), log_exponent_(p) {
    if (!std::isfinite(shift) || !std::isfinite(scale) || !(scale > 0.0)) {
      throw DomainError(std::string(to_string(kind)) + ": scale must be positive and finite");
    }
    if (kind != DistributionKind::Gaussian && !(alpha > 0.0 && std::isfinite(alpha))) {
      throw DomainError(std::string(to_string(kind)) + ": alpha must be positive and finite");
    }
    if (kind == DistributionKind::LogPareto) {
      if (!(p >= 0.0) || !std::isfinite(p)) {
        throw DomainError("log_pareto: exponent p must be non-negative");
      }
      if (p > 0.0 && !(scale > 1.0)) {
        throw DomainError("log_pareto: threshold must exceed 1 when p > 0");
      }
      // Non-increasing beyond the threshold requires log(threshold) >= p / alpha.
      if (p > 0.0 && std::log(scale) < p / alpha * (1.0 - 1e-12)) {
        throw DomainError("log_pareto: threshold below exp(p/alpha); tail would increase");
      }
      if (log_pareto_formula(scale) > 1.0 + 1e-15) {
        throw DomainError("log_pareto: tail formula exceeds 1 at the threshold");
      }
    }
  }

  [[nodiscard]] double log_pareto_formula(double t) const noexcept {
    const double lt = std::log(t);
    if (log_exponent_ == 0.0) {
      return std::pow(t, -alpha_);
    }
    return std::exp(log_exponent_ * std::log(lt) - alpha_ * lt);
  }

  // Solves tail(t) = q on [threshold, inf) in y = log t with a bracketing solver.
  [[nodiscard]] double log_pareto_quantile(double q) const {
    const double at_threshold = log_pareto_formula(scale_);
    if (q >= at_threshold) {
      return scale_;
    }
    const double log_q = std::log(q);
    const double p = log_exponent_;
    const double a = alpha_;
    auto g = [p, a, log_q](double y) { return p * std::log(y) - a * y - log_q; };
    if (p == 0.0) {
      return std::exp(-log_q / a);
    }
    double lo = std::log(scale_);
    double hi = std::max(2.0 * lo, -log_q / a + 1.0);
    while (g(hi) > 0.0) {
      hi *= 2.0;
    }
    boost::math::tools::eps_tolerance<double> tol(52);
    std::uintmax_t max_iter = 200;
    const auto [a_root, b_root] = boost::math::tools::toms748_solve(g, lo, hi, tol, max_iter);
    return std::exp(0.5 * (a_root + b_root));
  }

  DistributionKind kind_;
  double alpha_;
  double scale_;
  double shift_;
  double log_exponent_;
};

[[nodiscard]] inline double tail(const FactorDistribution& dist, double t) noexcept { return dist.tail(t); }

[[nodiscard]] inline double quantile(const FactorDistribution& dist, double u) { return dist.quantile(u); }

inline double sample(const FactorDistribution& dist, RandomStream& rng) { return dist.sample(rng); }

/// lim_{x->inf} tail_dist(x) / tail_reference(x), evaluated analytically.
///
/// Both tails are written as k (log x)^p x^-alpha. A lighter tail (larger alpha, or equal
/// alpha and smaller p) gives 0; a heavier one means `reference` is not the heaviest tail.
/// Equal indices across the power family (Pareto kinds) and the log family (LogPareto with
/// p > 0) are rejected as an unsupported pair.
[[nodiscard]] inline double tail_coefficient(const FactorDistribution& dist, const FactorDistribution& reference) {
  if (!dist.is_regularly_varying() || !reference.is_regularly_varying()) {
    throw UnsupportedPairError("tail_coefficient: gaussian tails have no regular-variation index");
  }
  const double a_i = dist.alpha();
  const double a_ref = reference.alpha();
  const double tol = 1e-12 * std::max(a_i, a_ref);
  if (a_i > a_ref + tol) {
    return 0.0;
  }
  if (a_i < a_ref - tol) {
    throw ReferenceNotHeaviestError("tail_coefficient: factor with alpha " + std::to_string(a_i) +
                                    " is heavier than the reference alpha " + std::to_string(a_ref));
  }
  const bool log_i = dist.kind() == DistributionKind::LogPareto && dist.log_exponent() > 0.0;
  const bool log_ref = reference.kind() == DistributionKind::LogPareto && reference.log_exponent() > 0.0;
  if (log_i != log_ref) {
    throw UnsupportedPairError("tail_coefficient: power and log slowly-varying families at equal alpha");
  }
  if (log_i) {
    const double p_i = dist.log_exponent();
    const double p_ref = reference.log_exponent();
    if (p_i < p_ref) {
      return 0.0;
    }
    if (p_i > p_ref) {
      throw ReferenceNotHeaviestError("tail_coefficient: factor has a heavier log factor than the reference");
    }
    return 1.0;
  }
  auto constant = [](const FactorDistribution& d) {
    // LogPareto with p == 0 is x^-alpha beyond its threshold, i.e. k = 1.
    return d.kind() == DistributionKind::LogPareto ? 1.0 : std::pow(d.scale(), d.alpha());
  };
  return constant(dist) / constant(reference);
}

}  // namespace heavytail
