#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "heavytail/distribution.hpp"
#include "heavytail/error.hpp"

namespace heavytail {

/// N independent factors, the reference tail F they are compared against and the
/// tail coefficients c_i = lim tail_i(x) / tail_F(x).
class FactorModel {
public:
  /// Builds the model with the heaviest regularly varying factor as reference.
  explicit FactorModel(std::vector<FactorDistribution> factors)
      : FactorModel(std::move(factors), std::nullopt) {}

  FactorModel(std::vector<FactorDistribution> factors, std::optional<FactorDistribution> reference)
      : factors_(std::move(factors)) {
    if (factors_.empty()) {
      throw ModelError("factor model needs at least one factor");
    }
    if (reference) {
      reference_ = *reference;
    } else {
      reference_ = heaviest(factors_);
    }
    if (!reference_->is_regularly_varying()) {
      throw UnsupportedModelError("reference tail must be regularly varying");
    }
    coefficients_.reserve(factors_.size());
    for (const auto& f : factors_) {
      // Any Gaussian tail is o(x^-alpha) for every alpha.
      coefficients_.push_back(f.is_regularly_varying() ? tail_coefficient(f, *reference_) : 0.0);
    }
    if (!(coefficient_sum() > 0.0)) {
      throw ModelError("factor model: every tail coefficient is zero; reference is lighter than all factors");
    }
  }

  [[nodiscard]] std::size_t size() const noexcept { return factors_.size(); }
  [[nodiscard]] std::span<const FactorDistribution> factors() const noexcept { return factors_; }
  [[nodiscard]] const FactorDistribution& factor(std::size_t i) const { return factors_.at(i); }
  [[nodiscard]] const FactorDistribution& reference_tail() const noexcept { return *reference_; }
  [[nodiscard]] std::span<const double> coefficients() const noexcept { return coefficients_; }

  [[nodiscard]] double coefficient_sum() const noexcept {
    return std::accumulate(coefficients_.begin(), coefficients_.end(), 0.0);
  }

  /// Index of the heaviest tail, min over regularly varying factors of alpha_i.
  [[nodiscard]] double alpha_min() const noexcept { return reference_->alpha(); }

  [[nodiscard]] bool all_regularly_varying() const noexcept {
    return std::all_of(factors_.begin(), factors_.end(),
                       [](const FactorDistribution& f) { return f.is_regularly_varying(); });
  }

  /// Smallest value S_N can take; -inf when a Gaussian factor is present.
  [[nodiscard]] double support_lower() const noexcept {
    double s = 0.0;
    for (const auto& f : factors_) {
      s += f.support_lower();
    }
    return s;
  }

  [[nodiscard]] double mean_alpha() const noexcept {
    double s = 0.0;
    for (const auto& f : factors_) {
      s += f.alpha();
    }
    return s / static_cast<double>(factors_.size());
  }

private:
  static FactorDistribution heaviest(const std::vector<FactorDistribution>& factors) {
    const FactorDistribution* best = nullptr;
    for (const auto& f : factors) {
      if (!f.is_regularly_varying()) {
        continue;
      }
      if (best == nullptr || f.alpha() < best->alpha() ||
          (f.alpha() == best->alpha() && f.log_exponent() > best->log_exponent())) {
        best = &f;
      }
    }
    if (best == nullptr) {
      throw UnsupportedModelError("factor model has no regularly varying factor to act as reference");
    }
    return *best;
  }

  std::vector<FactorDistribution> factors_;
  std::optional<FactorDistribution> reference_;
  std::vector<double> coefficients_;
};

/// `count` equidistant points on [lo, hi], endpoints included.
[[nodiscard]] inline std::vector<double> linspace(double lo, double hi, std::size_t count) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  const double step = (hi - lo) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = lo + step * static_cast<double>(i);
  }
  out.back() = hi;
  return out;
}

[[nodiscard]] inline FactorModel pareto_model(std::span<const double> alphas, double scale = 1.0) {
  std::vector<FactorDistribution> factors;
  factors.reserve(alphas.size());
  for (double a : alphas) {
    factors.push_back(FactorDistribution::pareto(a, scale));
  }
  return FactorModel(std::move(factors));
}

/// Ten Pareto(x_m = 1) factors with alpha equidistant on [1, 3]: the variable-threshold model.
[[nodiscard]] inline FactorModel variable_threshold_model() {
  const auto alphas = linspace(1.0, 3.0, 10);
  return pareto_model(alphas);
}

enum class CatastropheMode { ConstMin, VarMin };

/// Shape vector for one model of the catastrophe-principle family.
///
/// VarMin: alpha_k = e + k/10, k = 0..9, so mean alpha is e + 0.45.
/// ConstMin: the first entry is replaced by 1 and the other nine are shifted by the
/// same amount so that mean alpha stays e + 0.45.
[[nodiscard]] inline std::vector<double> catastrophe_alphas(double e, CatastropheMode mode, std::size_t count = 10) {
  std::vector<double> alphas(count);
  for (std::size_t k = 0; k < count; ++k) {
    alphas[k] = e + static_cast<double>(k) / static_cast<double>(count);
  }
  if (mode == CatastropheMode::ConstMin && count > 1) {
    const double target_sum = std::accumulate(alphas.begin(), alphas.end(), 0.0);
    alphas[0] = 1.0;
    const double rest = std::accumulate(alphas.begin() + 1, alphas.end(), 0.0);
    const double shift = (target_sum - 1.0 - rest) / static_cast<double>(count - 1);
    for (std::size_t k = 1; k < count; ++k) {
      alphas[k] += shift;
    }
  }
  return alphas;
}

}  // namespace heavytail
