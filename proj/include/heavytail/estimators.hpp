#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "heavytail/accumulator.hpp"
#include "heavytail/distribution.hpp"
#include "heavytail/error.hpp"
#include "heavytail/factor_model.hpp"
#include "heavytail/parallel.hpp"
#include "heavytail/random.hpp"

namespace heavytail {

enum class Method { Crude, Cmc, IsPartition, GaussianTwist };

[[nodiscard]] inline std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::Crude:
      return "crude";
    case Method::Cmc:
      return "cmc";
    case Method::IsPartition:
      return "is";
    case Method::GaussianTwist:
      return "twist";
  }
  return "unknown";
}

/// Sample mean of n per-sample estimator values and the derived error measures.
class EstimateResult {
public:
  EstimateResult(Method method, MomentAccumulator moments) : method_(method), moments_(moments) {}

  [[nodiscard]] Method method() const noexcept { return method_; }
  [[nodiscard]] std::uint64_t n() const noexcept { return moments_.count(); }
  [[nodiscard]] double estimate() const noexcept { return moments_.mean(); }
  /// Population variance of the per-sample values.
  [[nodiscard]] double variance() const noexcept { return moments_.variance(); }
  /// Mean of the squared per-sample values; never below estimate()^2.
  [[nodiscard]] double second_moment() const noexcept {
    const double mu = estimate();
    return variance() + mu * mu;
  }
  [[nodiscard]] double standard_error() const noexcept {
    return n() == 0 ? std::numeric_limits<double>::infinity() : std::sqrt(variance() / static_cast<double>(n()));
  }
  /// sqrt((m2 - mu^2) / n) / mu; +inf when no sample hit (mu == 0).
  [[nodiscard]] double relative_error() const noexcept {
    const double mu = estimate();
    if (!(mu > 0.0)) {
      return std::numeric_limits<double>::infinity();
    }
    return standard_error() / mu;
  }
  /// Half-width of the two-sided normal-approximation interval at `confidence`.
  [[nodiscard]] double ci_halfwidth(double confidence = 0.95) const {
    if (!(confidence > 0.0 && confidence < 1.0)) {
      throw DomainError("ci_halfwidth: confidence must lie in (0, 1)");
    }
    return normal_quantile(0.5 * (1.0 + confidence)) * standard_error();
  }

  [[nodiscard]] const MomentAccumulator& moments() const noexcept { return moments_; }

  void merge(const EstimateResult& other) {
    if (other.method_ != method_) {
      throw Error("cannot merge estimates of different methods");
    }
    moments_.merge(other.moments_);
  }

private:
  Method method_;
  MomentAccumulator moments_;
};

namespace detail {

inline void require_samples(std::uint64_t n) {
  if (n < 1) {
    throw DomainError("estimator needs n >= 1 samples");
  }
}

inline void draw(const FactorModel& model, RandomStream& rng, std::span<double> out) {
  const auto factors = model.factors();
  for (std::size_t i = 0; i < factors.size(); ++i) {
    out[i] = factors[i].sample(rng);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Crude Monte-Carlo

/// Fraction of n independent draws of the factor vector whose sum exceeds x.
[[nodiscard]] inline EstimateResult crude_mc(const FactorModel& model, double x, std::uint64_t n, RandomStream& rng) {
  detail::require_samples(n);
  std::vector<double> xs(model.size());
  MomentAccumulator acc;
  for (std::uint64_t k = 0; k < n; ++k) {
    detail::draw(model, rng, xs);
    double s = 0.0;
    for (double v : xs) {
      s += v;
    }
    acc.add(s > x ? 1.0 : 0.0);
  }
  return {Method::Crude, acc};
}

// ---------------------------------------------------------------------------
// Conditional Monte-Carlo

/// Z(x) = sum_i tail_i((x - S_{N,-i}) v M_{N,-i}) for one draw vector.
///
/// S_{N,-i} and M_{N,-i} are the sum and maximum of the other N - 1 draws; for N = 1
/// they are 0 and -inf, so Z = tail_1(x).
[[nodiscard]] inline double cmc_single(const FactorModel& model, std::span<const double> draws, double x) {
  const std::size_t n = model.size();
  if (draws.size() != n) {
    throw ShapeError("cmc_single: expected " + std::to_string(n) + " draws, got " + std::to_string(draws.size()));
  }
  const auto factors = model.factors();
  if (n == 1) {
    return factors[0].tail(x);
  }
  // Top two values; ties keep the lowest index as the maximum.
  std::size_t arg_max = 0;
  double first = draws[0];
  double second = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < n; ++i) {
    if (draws[i] > first) {
      second = first;
      first = draws[i];
      arg_max = i;
    } else if (draws[i] > second) {
      second = draws[i];
    }
  }
  // Sum of the others from prefix and suffix sums, avoiding S - X_i cancellation.
  thread_local std::vector<double> suffix;
  suffix.resize(n + 1);
  suffix[n] = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    suffix[i] = suffix[i + 1] + draws[i];
  }
  double z = 0.0;
  double prefix = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double others = prefix + suffix[i + 1];
    const double max_others = (i == arg_max) ? second : first;
    z += factors[i].tail(std::max(x - others, max_others));
    prefix += draws[i];
  }
  return z;
}

inline void require_cmc_model(const FactorModel& model) {
  if (!model.all_regularly_varying()) {
    throw UnsupportedModelError("cmc: every factor must have a regularly varying tail (gaussian factor present)");
  }
}

/// Mean of n independent cmc_single evaluations; unbiased for P[S_N > x].
[[nodiscard]] inline EstimateResult cmc(const FactorModel& model, double x, std::uint64_t n, RandomStream& rng) {
  require_cmc_model(model);
  detail::require_samples(n);
  std::vector<double> xs(model.size());
  MomentAccumulator acc;
  for (std::uint64_t k = 0; k < n; ++k) {
    detail::draw(model, rng, xs);
    acc.add(cmc_single(model, xs, x));
  }
  return {Method::Cmc, acc};
}

/// sum_i tail_i(x / N): a deterministic upper bound on every realization of Z(x).
[[nodiscard]] inline double cmc_envelope(const FactorModel& model, double x) {
  if (!(x > 0.0)) {
    throw DomainError("cmc_envelope: x must be positive");
  }
  const double t = x / static_cast<double>(model.size());
  double s = 0.0;
  for (const auto& f : model.factors()) {
    s += f.tail(t);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Importance sampling on the partition by the maximal factor

/// Default proposals: each Pareto-type factor with its tail index halved, Gaussians unchanged.
[[nodiscard]] inline std::vector<FactorDistribution> default_is_proposals(const FactorModel& model) {
  std::vector<FactorDistribution> out;
  out.reserve(model.size());
  for (const auto& f : model.factors()) {
    switch (f.kind()) {
      case DistributionKind::Pareto:
        out.push_back(FactorDistribution::pareto(f.alpha() / 2.0, f.scale()));
        break;
      case DistributionKind::ShiftedPareto:
        out.push_back(FactorDistribution::shifted_pareto(f.alpha() / 2.0, f.scale(), f.shift()));
        break;
      default:
        out.push_back(f);
        break;
    }
  }
  return out;
}

inline void validate_proposals(const FactorModel& model, std::span<const FactorDistribution> proposals) {
  if (proposals.size() != model.size()) {
    throw ShapeError("is_partition: expected " + std::to_string(model.size()) + " proposals, got " +
                     std::to_string(proposals.size()));
  }
  const auto factors = model.factors();
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (!factors[i].has_density() || !proposals[i].has_density()) {
      throw UnsupportedModelError("is_partition: factor " + std::to_string(i) + " or its proposal has no density");
    }
    if (proposals[i].support_lower() > factors[i].support_lower()) {
      throw DominanceError("is_partition: proposal " + std::to_string(i) +
                           " does not cover the support of its target");
    }
  }
}

/// One replicate: sum_i f_i(Y_i)/g_i(Y_i) 1[S^(i) > x, Y_i is the maximum of (X_-i, Y_i)].
///
/// `draws` are X ~ F, `proposed` are Y_i ~ G_i. Ties for the maximum go to the lowest index.
[[nodiscard]] inline double is_partition_single(const FactorModel& model,
                                                std::span<const FactorDistribution> proposals,
                                                std::span<const double> draws, std::span<const double> proposed,
                                                double x) {
  const auto factors = model.factors();
  const std::size_t n = factors.size();
  if (draws.size() != n || proposed.size() != n) {
    throw ShapeError("is_partition_single: draw vectors must have one entry per factor");
  }
  double total = 0.0;
  for (double v : draws) {
    total += v;
  }
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = proposed[i];
    bool is_max = true;
    for (std::size_t j = 0; j < n && is_max; ++j) {
      if (j < i) {
        is_max = y > draws[j];
      } else if (j > i) {
        is_max = y >= draws[j];
      }
    }
    if (!is_max) {
      continue;
    }
    const double s = (total - draws[i]) + y;
    if (s > x) {
      z += factors[i].density(y) / proposals[i].density(y);
    }
  }
  return z;
}

[[nodiscard]] inline EstimateResult is_partition(const FactorModel& model,
                                                 std::span<const FactorDistribution> proposals, double x,
                                                 std::uint64_t n, RandomStream& rng) {
  validate_proposals(model, proposals);
  detail::require_samples(n);
  const std::size_t dim = model.size();
  std::vector<double> xs(dim);
  std::vector<double> ys(dim);
  MomentAccumulator acc;
  for (std::uint64_t k = 0; k < n; ++k) {
    detail::draw(model, rng, xs);
    for (std::size_t i = 0; i < dim; ++i) {
      ys[i] = proposals[i].sample(rng);
    }
    acc.add(is_partition_single(model, proposals, xs, ys, x));
  }
  return {Method::IsPartition, acc};
}

// ---------------------------------------------------------------------------
// Gaussian factor model with exponential twisting

/// Equal-weight index xi = <beta_bar, phi> + mean(eps) with phi ~ N(0, I_k),
/// eps_i ~ N(0, sigma_i^2). The index is Normal(0, v), v = |beta_bar|^2 + sum sigma_i^2 / M^2.
class GaussianFactorModel {
public:
  GaussianFactorModel(std::vector<double> loadings, std::vector<double> idiosyncratic_variances)
      : loadings_(std::move(loadings)), idio_(std::move(idiosyncratic_variances)) {
    for (double s2 : idio_) {
      if (!(s2 >= 0.0)) {
        throw DomainError("gaussian factor model: idiosyncratic variances must be non-negative");
      }
    }
    if (!(index_variance() > 0.0) || !std::isfinite(index_variance())) {
      throw ModelError("gaussian factor model: index variance must be positive");
    }
  }

  /// A model whose index variance is exactly v (one factor with loading sqrt(v)).
  static GaussianFactorModel with_index_variance(double v) {
    if (!(v > 0.0)) {
      throw ModelError("gaussian factor model: index variance must be positive");
    }
    return GaussianFactorModel({std::sqrt(v)}, {});
  }

  [[nodiscard]] std::span<const double> loadings() const noexcept { return loadings_; }
  [[nodiscard]] std::span<const double> idiosyncratic_variances() const noexcept { return idio_; }
  [[nodiscard]] std::size_t factor_count() const noexcept { return loadings_.size(); }

  [[nodiscard]] double index_variance() const noexcept {
    double v = std::inner_product(loadings_.begin(), loadings_.end(), loadings_.begin(), 0.0);
    if (!idio_.empty()) {
      const double m = static_cast<double>(idio_.size());
      v += std::accumulate(idio_.begin(), idio_.end(), 0.0) / (m * m);
    }
    return v;
  }

  /// psi(theta) = log E exp(theta xi) = theta^2 v / 2.
  [[nodiscard]] double cumulant(double theta) const noexcept { return 0.5 * theta * theta * index_variance(); }

  /// The twisting parameter solving psi'(theta) = lambda.
  [[nodiscard]] double optimal_theta(double lambda) const noexcept { return lambda / index_variance(); }

  /// Exact P[xi > lambda].
  [[nodiscard]] double exact_tail(double lambda) const noexcept {
    return normal_upper_tail(lambda / std::sqrt(index_variance()));
  }

private:
  std::vector<double> loadings_;
  std::vector<double> idio_;
};

/// Exponentially twisted estimator of P[xi > lambda].
///
/// Samples xi ~ Normal(theta* v, v) and averages 1[xi > lambda] exp(psi(theta*) - theta* xi).
[[nodiscard]] inline EstimateResult gaussian_twist(const GaussianFactorModel& model, double lambda, std::uint64_t n,
                                                   RandomStream& rng) {
  if (!(lambda > 0.0)) {
    throw DomainError("gaussian_twist: lambda must be positive");
  }
  detail::require_samples(n);
  const double v = model.index_variance();
  const double sd = std::sqrt(v);
  const double theta = model.optimal_theta(lambda);
  const double psi = model.cumulant(theta);
  const double mean = theta * v;
  MomentAccumulator acc;
  for (std::uint64_t k = 0; k < n; ++k) {
    const double xi = mean + sd * normal_quantile(rng.uniform());
    acc.add(xi > lambda ? std::exp(psi - theta * xi) : 0.0);
  }
  return {Method::GaussianTwist, acc};
}

/// Crude Monte-Carlo for the Gaussian index, sampling xi ~ Normal(0, v) directly.
[[nodiscard]] inline EstimateResult gaussian_crude(const GaussianFactorModel& model, double lambda, std::uint64_t n,
                                                   RandomStream& rng) {
  detail::require_samples(n);
  const double sd = std::sqrt(model.index_variance());
  MomentAccumulator acc;
  for (std::uint64_t k = 0; k < n; ++k) {
    acc.add(sd * normal_quantile(rng.uniform()) > lambda ? 1.0 : 0.0);
  }
  return {Method::Crude, acc};
}

// ---------------------------------------------------------------------------
// Splitting one estimate across workers

/// Runs `estimator(chunk_n, stream)` on `workers` chunks of n and merges the results.
///
/// Chunk w draws from the sub-stream (seed, w); the merge order is the chunk order, so the
/// result is bit-identical for a fixed (seed, workers).
template <typename Estimator>
[[nodiscard]] EstimateResult split_across_workers(std::uint64_t n, std::uint64_t seed, unsigned workers,
                                                  Estimator&& estimator) {
  detail::require_samples(n);
  const std::uint64_t w = std::clamp<std::uint64_t>(workers, 1, n);
  std::vector<std::optional<EstimateResult>> parts(w);
  parallel_for(static_cast<std::size_t>(w), static_cast<unsigned>(w), [&](std::size_t i) {
    const std::uint64_t lo = n * i / w;
    const std::uint64_t hi = n * (i + 1) / w;
    RandomStream rng(seed, {static_cast<std::uint64_t>(i)});
    parts[i].emplace(estimator(hi - lo, rng));
  });
  EstimateResult out = *parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) {
    out.merge(*parts[i]);
  }
  return out;
}

}  // namespace heavytail
