#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "heavytail/asymptotics.hpp"
#include "heavytail/error.hpp"
#include "heavytail/estimators.hpp"
#include "heavytail/factor_model.hpp"
#include "heavytail/parallel.hpp"
#include "heavytail/random.hpp"
#include "heavytail/reml.hpp"

namespace heavytail {

/// The fitted log-ratio slope is not negative, so no exponential gain can be reported.
class NoExponentialGainError : public NumericError {
public:
  NoExponentialGainError(const std::string& what, RemlFit fit) : NumericError(what), fit_(fit) {}
  [[nodiscard]] const RemlFit& fit() const noexcept { return fit_; }

private:
  RemlFit fit_;
};

/// n grid used by the experiment drivers: 10, 20, ..., 100.
[[nodiscard]] inline std::vector<std::uint64_t> default_n_grid() {
  std::vector<std::uint64_t> g;
  for (std::uint64_t k = 1; k <= 10; ++k) {
    g.push_back(10 * k);
  }
  return g;
}

/// Configuration of an outer-replication experiment on one factor model.
///
/// For every (x, n) cell the log-ratio is computed `lr_replicates` times; each
/// computation compares the deviation fractions of `outer_reps` independent CMC and
/// crude estimates of size n against one reference value mu(x).
struct DeviationExperiment {
  FactorModel model;
  std::vector<double> x_grid;
  std::vector<std::uint64_t> n_grid = default_n_grid();
  double kappa = 5e-3;
  std::uint64_t outer_reps = 50;
  std::uint64_t lr_replicates = 50;
  std::uint64_t n_ref = 1'000'000;
  std::uint64_t seed = 0;
  unsigned workers = 1;

  void validate() const {
    if (!(kappa > 0.0 && kappa < 1.0)) {
      throw DomainError("experiment: kappa must lie in (0, 1)");
    }
    if (outer_reps < 2) {
      throw DomainError("experiment: outer replications R must be >= 2");
    }
    if (lr_replicates < 1) {
      throw DomainError("experiment: need at least one log-ratio replicate per cell");
    }
    if (x_grid.empty() || n_grid.empty()) {
      throw DomainError("experiment: x and n grids must be non-empty");
    }
    if (std::any_of(n_grid.begin(), n_grid.end(), [](std::uint64_t n) { return n == 0; })) {
      throw DomainError("experiment: n grid entries must be >= 1");
    }
    const auto n_max = *std::max_element(n_grid.begin(), n_grid.end());
    if (n_ref < 10 * n_max) {
      throw DomainError("experiment: n_ref must be at least 10 x max(n grid)");
    }
    if (workers < 1) {
      throw DomainError("experiment: workers must be >= 1");
    }
  }
};

// Stream tags keep the mu-reference and per-cell draws on disjoint sub-streams.
namespace stream_tag {
inline constexpr std::uint64_t mu_ref = 1;
inline constexpr std::uint64_t cell = 2;
}  // namespace stream_tag

/// Fixed chunk count for reference estimates, so mu_ref does not depend on the worker count.
inline constexpr std::size_t mu_ref_chunks = 16;

/// High-precision CMC estimate of mu(x), the centre of every deviation count.
[[nodiscard]] inline EstimateResult estimate_mu_ref(const FactorModel& model, double x, std::uint64_t n_ref,
                                                    RandomStream& rng) {
  if (n_ref < 100'000) {
    throw DomainError("estimate_mu_ref: n_ref must be >= 1e5");
  }
  return cmc(model, x, n_ref, rng);
}

/// Parallel form: chunk c of n_ref draws from sub-stream (base key, c).
[[nodiscard]] inline EstimateResult estimate_mu_ref(const FactorModel& model, double x, std::uint64_t n_ref,
                                                    const RandomStream& base, unsigned workers) {
  if (n_ref < 100'000) {
    throw DomainError("estimate_mu_ref: n_ref must be >= 1e5");
  }
  require_cmc_model(model);
  std::vector<std::optional<EstimateResult>> parts(mu_ref_chunks);
  parallel_for(mu_ref_chunks, workers, [&](std::size_t c) {
    const std::uint64_t lo = n_ref * c / mu_ref_chunks;
    const std::uint64_t hi = n_ref * (c + 1) / mu_ref_chunks;
    RandomStream rng = base.derive({c});
    parts[c].emplace(cmc(model, x, hi - lo, rng));
  });
  EstimateResult out = *parts[0];
  for (std::size_t c = 1; c < parts.size(); ++c) {
    out.merge(*parts[c]);
  }
  return out;
}

/// Number of estimates out of `trials` that miss mu_ref by more than kappa * mu_ref.
struct DeviationCount {
  std::uint64_t count = 0;
  std::uint64_t trials = 0;

  [[nodiscard]] double fraction() const noexcept {
    return trials == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(trials);
  }
  [[nodiscard]] bool censored() const noexcept { return count == 0; }
};

[[nodiscard]] inline bool deviates(double estimate, double mu_ref, double kappa) noexcept {
  return std::abs(estimate - mu_ref) > kappa * mu_ref;
}

/// One estimate of size n by `method`; the IS variant uses the default proposals.
[[nodiscard]] inline double single_estimate(Method method, const FactorModel& model, double x, std::uint64_t n,
                                            RandomStream& rng) {
  switch (method) {
    case Method::Crude:
      return crude_mc(model, x, n, rng).estimate();
    case Method::Cmc:
      return cmc(model, x, n, rng).estimate();
    case Method::IsPartition: {
      const auto proposals = default_is_proposals(model);
      return is_partition(model, proposals, x, n, rng).estimate();
    }
    case Method::GaussianTwist:
      break;
  }
  throw UnsupportedModelError("deviation_probability: gaussian twisting needs a gaussian factor model");
}

/// `trials` independent estimates of size n, in draw order.
[[nodiscard]] inline std::vector<double> deviation_trials(Method method, const FactorModel& model, double x,
                                                          std::uint64_t n, std::uint64_t trials, RandomStream& rng) {
  std::vector<double> out;
  out.reserve(trials);
  for (std::uint64_t r = 0; r < trials; ++r) {
    out.push_back(single_estimate(method, model, x, n, rng));
  }
  return out;
}

[[nodiscard]] inline DeviationCount count_deviations(std::span<const double> estimates, double mu_ref, double kappa) {
  DeviationCount c;
  c.trials = estimates.size();
  for (double e : estimates) {
    c.count += deviates(e, mu_ref, kappa) ? 1 : 0;
  }
  return c;
}

/// Runs R estimates of size n and counts those with |estimate - mu_ref| > kappa mu_ref.
[[nodiscard]] inline DeviationCount deviation_probability(Method method, const FactorModel& model, double x,
                                                          std::uint64_t n, double kappa, double mu_ref,
                                                          std::uint64_t trials, RandomStream& rng) {
  if (!(mu_ref > 0.0)) {
    throw DomainError("deviation_probability: mu_ref must be positive");
  }
  const auto est = deviation_trials(method, model, x, n, trials, rng);
  return count_deviations(est, mu_ref, kappa);
}

/// log(CMC deviation fraction / crude deviation fraction); empty when either count is zero.
[[nodiscard]] inline std::optional<double> lr_ratio(const DeviationCount& cmc_count,
                                                    const DeviationCount& crude_count) {
  if (cmc_count.censored() || crude_count.censored()) {
    return std::nullopt;
  }
  return std::log(cmc_count.fraction()) - std::log(crude_count.fraction());
}

/// One log-ratio observation of an experiment cell.
struct LrRecord {
  double x = 0.0;
  std::uint64_t n = 0;
  std::uint64_t replicate = 0;
  DeviationCount cmc;
  DeviationCount crude;
  std::optional<double> log_lambda;
};

/// Per-estimate record for the long-format output.
struct TrialRecord {
  double x;
  std::uint64_t n;
  std::uint64_t replicate;
  Method method;
  double estimate;
  bool deviated;
};

/// Log-ratio observations at one x and the random-slope fit of log(Lambda) on n.
struct LrCurve {
  double x = 0.0;
  double mu_ref = 0.0;
  std::vector<LrRecord> records;
  std::optional<RemlFit> fit;
  std::string fit_error;
  std::size_t censored = 0;

  /// -beta1 of the fit; NaN when the fit could not be computed.
  [[nodiscard]] double rate() const noexcept { return fit ? -fit->beta1 : std::nan(""); }

  /// Mean log(Lambda) per n over the uncensored replicates.
  [[nodiscard]] std::vector<std::pair<std::uint64_t, double>> mean_by_n() const {
    std::vector<std::pair<std::uint64_t, double>> out;
    for (const auto& r : records) {
      if (!r.log_lambda) {
        continue;
      }
      auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.first == r.n; });
      if (it == out.end()) {
        out.emplace_back(r.n, 0.0);
      }
    }
    for (auto& [n, mean] : out) {
      double s = 0.0;
      std::size_t k = 0;
      for (const auto& r : records) {
        if (r.n == n && r.log_lambda) {
          s += *r.log_lambda;
          ++k;
        }
      }
      mean = s / static_cast<double>(k);
    }
    std::sort(out.begin(), out.end());
    return out;
  }
};

/// Fits the random-slope model to the uncensored records, grouping by n.
inline void fit_curve(LrCurve& curve) {
  std::vector<GroupedObservation> obs;
  curve.censored = 0;
  for (const auto& r : curve.records) {
    if (!r.log_lambda) {
      ++curve.censored;
      continue;
    }
    obs.push_back({static_cast<std::int64_t>(r.n), static_cast<double>(r.n), *r.log_lambda});
  }
  try {
    curve.fit = reml_fit(obs);
    curve.fit_error.clear();
  } catch (const Error& e) {
    curve.fit.reset();
    curve.fit_error = e.what();
  }
}

/// r = -beta1; throws unless the fitted slope is negative.
[[nodiscard]] inline double estimate_r(const LrCurve& curve) {
  if (!curve.fit) {
    throw NumericError("estimate_r: no fit available at x = " + std::to_string(curve.x) + ": " + curve.fit_error);
  }
  if (!(curve.fit->beta1 < 0.0)) {
    throw NoExponentialGainError("estimate_r: no exponential gain detected at x = " + std::to_string(curve.x) +
                                     " (beta1 = " + std::to_string(curve.fit->beta1) + ")",
                                 *curve.fit);
  }
  return -curve.fit->beta1;
}

/// Outcome of the pipeline on one model.
struct ExperimentResult {
  std::vector<LrCurve> curves;
  std::vector<TrialRecord> trials;
};

/// Runs the deviation pipeline for one model over the experiment's x and n grids.
///
/// Stream layout: mu_ref at (seed, mu_ref, model_index, x_index); cell estimates of
/// `method` at (seed, cell, model_index, x_index, n_index, replicate, method). Every cell
/// owns its stream, so results do not depend on the worker count or scheduling.
[[nodiscard]] inline ExperimentResult run_deviation_pipeline(const DeviationExperiment& cfg,
                                                             std::uint64_t model_index = 0,
                                                             bool keep_trials = false) {
  cfg.validate();
  require_cmc_model(cfg.model);
  const RandomStream master(cfg.seed);
  const std::size_t nx = cfg.x_grid.size();
  const std::size_t nn = cfg.n_grid.size();
  const std::size_t nb = cfg.lr_replicates;

  ExperimentResult result;
  result.curves.resize(nx);
  for (std::size_t xi = 0; xi < nx; ++xi) {
    auto& curve = result.curves[xi];
    curve.x = cfg.x_grid[xi];
    const RandomStream base = master.derive({stream_tag::mu_ref, model_index, xi});
    curve.mu_ref = estimate_mu_ref(cfg.model, curve.x, cfg.n_ref, base, cfg.workers).estimate();
    if (!(curve.mu_ref > 0.0)) {
      throw NumericError("experiment: reference estimate is zero at x = " + std::to_string(curve.x));
    }
  }

  const std::size_t cells = nx * nn * nb;
  std::vector<LrRecord> records(cells);
  std::vector<std::vector<double>> cmc_estimates(keep_trials ? cells : 0);
  std::vector<std::vector<double>> crude_estimates(keep_trials ? cells : 0);
  parallel_for(cells, cfg.workers, [&](std::size_t idx) {
    const std::size_t xi = idx / (nn * nb);
    const std::size_t ni = (idx / nb) % nn;
    const std::size_t b = idx % nb;
    const double x = cfg.x_grid[xi];
    const double mu = result.curves[xi].mu_ref;
    const std::uint64_t n = cfg.n_grid[ni];
    RandomStream cmc_rng = master.derive({stream_tag::cell, model_index, xi, ni, b, 0});
    RandomStream crude_rng = master.derive({stream_tag::cell, model_index, xi, ni, b, 1});
    auto cmc_est = deviation_trials(Method::Cmc, cfg.model, x, n, cfg.outer_reps, cmc_rng);
    auto crude_est = deviation_trials(Method::Crude, cfg.model, x, n, cfg.outer_reps, crude_rng);
    LrRecord& rec = records[idx];
    rec.x = x;
    rec.n = n;
    rec.replicate = b;
    rec.cmc = count_deviations(cmc_est, mu, cfg.kappa);
    rec.crude = count_deviations(crude_est, mu, cfg.kappa);
    rec.log_lambda = lr_ratio(rec.cmc, rec.crude);
    if (keep_trials) {
      cmc_estimates[idx] = std::move(cmc_est);
      crude_estimates[idx] = std::move(crude_est);
    }
  });

  for (std::size_t idx = 0; idx < cells; ++idx) {
    const std::size_t xi = idx / (nn * nb);
    result.curves[xi].records.push_back(records[idx]);
    if (keep_trials) {
      const auto& rec = records[idx];
      const double mu = result.curves[xi].mu_ref;
      for (std::size_t r = 0; r < cmc_estimates[idx].size(); ++r) {
        const std::uint64_t rep = rec.replicate * cfg.outer_reps + r;
        result.trials.push_back(
            {rec.x, rec.n, rep, Method::Cmc, cmc_estimates[idx][r], deviates(cmc_estimates[idx][r], mu, cfg.kappa)});
      }
      for (std::size_t r = 0; r < crude_estimates[idx].size(); ++r) {
        const std::uint64_t rep = rec.replicate * cfg.outer_reps + r;
        result.trials.push_back({rec.x, rec.n, rep, Method::Crude, crude_estimates[idx][r],
                                 deviates(crude_estimates[idx][r], mu, cfg.kappa)});
      }
    }
  }
  for (auto& curve : result.curves) {
    fit_curve(curve);
  }
  return result;
}

/// Rebuilds log-ratio curves from long-format trial records.
///
/// Records with replicate index r belong to log-ratio replicate r / outer_reps.
[[nodiscard]] inline std::vector<LrCurve> curves_from_trials(std::span<const TrialRecord> trials,
                                                             std::uint64_t outer_reps) {
  if (outer_reps < 1) {
    throw DomainError("curves_from_trials: outer_reps must be >= 1");
  }
  struct Key {
    double x;
    std::uint64_t n;
    std::uint64_t b;
    auto operator<=>(const Key&) const = default;
  };
  std::map<Key, std::pair<DeviationCount, DeviationCount>> cells;
  for (const auto& t : trials) {
    if (t.method != Method::Cmc && t.method != Method::Crude) {
      continue;
    }
    auto& cell = cells[Key{t.x, t.n, t.replicate / outer_reps}];
    auto& c = t.method == Method::Cmc ? cell.first : cell.second;
    c.trials += 1;
    c.count += t.deviated ? 1 : 0;
  }
  std::vector<LrCurve> curves;
  for (const auto& [key, counts] : cells) {
    if (curves.empty() || curves.back().x != key.x) {
      curves.emplace_back();
      curves.back().x = key.x;
    }
    LrRecord rec;
    rec.x = key.x;
    rec.n = key.n;
    rec.replicate = key.b;
    rec.cmc = counts.first;
    rec.crude = counts.second;
    rec.log_lambda = lr_ratio(rec.cmc, rec.crude);
    curves.back().records.push_back(rec);
  }
  for (auto& c : curves) {
    fit_curve(c);
  }
  return curves;
}

// ---------------------------------------------------------------------------
// Experiment drivers

struct TableRow {
  /// x for the variable-threshold table, mean alpha or alpha_min for the catastrophe tables.
  double key;
  double mu;
  double r;
};

struct TableResult {
  std::vector<TableRow> rows;
  std::vector<LrCurve> curves;
  std::vector<TrialRecord> trials;
  /// (sum c_i) tail_F(x) per row.
  std::vector<double> mu_asymptotic;
  /// sum_i tail_i(x) per row; the same first-order approximation, keeping every factor.
  std::vector<double> mu_marginal;
};

/// Variable deviation bound: x = 100, 200, ..., 1000 on the ten-factor alpha in [1, 3] model.
struct VarCConfig {
  std::vector<double> x_grid = {100, 200, 300, 400, 500, 600, 700, 800, 900, 1000};
  std::vector<std::uint64_t> n_grid = default_n_grid();
  double kappa = 5e-3;
  std::uint64_t outer_reps = 50;
  std::uint64_t lr_replicates = 50;
  std::uint64_t n_ref = 1'000'000;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  bool keep_trials = false;
};

[[nodiscard]] inline TableResult run_var_c(const VarCConfig& config) {
  DeviationExperiment exp{variable_threshold_model(), config.x_grid, config.n_grid, config.kappa,
                          config.outer_reps,          config.lr_replicates, config.n_ref, config.seed,
                          config.workers};
  auto res = run_deviation_pipeline(exp, 0, config.keep_trials);
  TableResult out;
  for (const auto& c : res.curves) {
    out.rows.push_back({c.x, c.mu_ref, c.rate()});
    out.mu_asymptotic.push_back(asymptotic_sum_tail(exp.model, c.x));
    out.mu_marginal.push_back(sum_of_marginal_tails(exp.model, c.x));
  }
  out.curves = std::move(res.curves);
  out.trials = std::move(res.trials);
  return out;
}

/// Catastrophe-principle family: one model per e in {1.0, 1.4, ..., 5.0}, all at one x.
struct CatastropheConfig {
  std::vector<double> e_grid = linspace(1.0, 5.0, 11);
  double x = 100.0;
  std::vector<std::uint64_t> n_grid = default_n_grid();
  double kappa = 5e-3;
  std::uint64_t outer_reps = 50;
  std::uint64_t lr_replicates = 50;
  std::uint64_t n_ref = 1'000'000;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  bool keep_trials = false;
};

[[nodiscard]] inline TableResult run_catastrophe(const CatastropheConfig& config, CatastropheMode mode) {
  TableResult out;
  for (std::size_t m = 0; m < config.e_grid.size(); ++m) {
    const auto alphas = catastrophe_alphas(config.e_grid[m], mode);
    DeviationExperiment exp{pareto_model(alphas), {config.x}, config.n_grid, config.kappa,
                            config.outer_reps,    config.lr_replicates, config.n_ref, config.seed,
                            config.workers};
    auto res = run_deviation_pipeline(exp, m, config.keep_trials);
    const auto& c = res.curves.front();
    const double key = mode == CatastropheMode::ConstMin ? exp.model.mean_alpha() : exp.model.alpha_min();
    out.rows.push_back({key, c.mu_ref, c.rate()});
    out.mu_asymptotic.push_back(asymptotic_sum_tail(exp.model, config.x));
    out.mu_marginal.push_back(sum_of_marginal_tails(exp.model, config.x));
    out.curves.push_back(c);
    out.trials.insert(out.trials.end(), res.trials.begin(), res.trials.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Small statistics helpers used by the experiment checks

/// Average ranks (1-based), ties sharing the mean rank.
[[nodiscard]] inline std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) {
      ++j;
    }
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      r[idx[k]] = avg;
    }
    i = j + 1;
  }
  return r;
}

/// Spearman rank correlation.
[[nodiscard]] inline double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw ShapeError("spearman: need two equally long series of length >= 2");
  }
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace heavytail
