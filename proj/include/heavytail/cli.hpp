#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "heavytail/efficiency_lab.hpp"
#include "heavytail/error.hpp"
#include "heavytail/estimators.hpp"
#include "heavytail/io.hpp"
#include "heavytail/parallel.hpp"

namespace heavytail::cli {

enum ExitCode : int { ok = 0, failure = 1, usage = 2, model_error = 3, numeric_failure = 4, io_failure = 5 };

class UsageError : public Error {
public:
  using Error::Error;
};

/// --help was given; what() holds the help text.
class HelpRequested : public Error {
public:
  using Error::Error;
};

/// Fully resolved options of one invocation.
struct RunConfig {
  std::string command;
  std::string model = "ten-pareto";
  std::string method = "cmc";
  std::string kind;
  std::string gaussian_index;
  double x = std::nan("");
  double variance = 1.0;
  std::uint64_t n = 100'000;
  double kappa = 5e-3;
  std::uint64_t outer_reps = 50;
  std::uint64_t lr_replicates = 50;
  std::uint64_t n_ref = 1'000'000;
  std::optional<std::uint64_t> seed;
  unsigned workers = default_worker_count();
  std::vector<double> x_grid;
  std::vector<std::uint64_t> n_grid = default_n_grid();
  std::string output;
  std::string long_output;
  std::string diagnostics_output;
  std::string input;
  std::string format = "csv";
};

namespace detail {

using io::json;

template <typename T>
T json_get(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw UsageError("config: '" + key + "' has the wrong type");
  }
}

// Config-file keys use the long flag names with '-' replaced by '_'.
inline void apply_config_file(const json& j, RunConfig& c) {
  if (!j.is_object()) {
    throw UsageError("config: document must be a JSON object");
  }
  for (const auto& [k, v] : j.items()) {
    if (k == "model") {
      c.model = v.is_string() ? v.get<std::string>() : v.dump();
    } else if (k == "gaussian_index") {
      c.gaussian_index = v.is_string() ? v.get<std::string>() : v.dump();
    } else if (k == "method") {
      c.method = json_get<std::string>(v, k);
    } else if (k == "kind") {
      c.kind = json_get<std::string>(v, k);
    } else if (k == "x") {
      c.x = json_get<double>(v, k);
    } else if (k == "variance") {
      c.variance = json_get<double>(v, k);
    } else if (k == "n") {
      c.n = json_get<std::uint64_t>(v, k);
    } else if (k == "kappa") {
      c.kappa = json_get<double>(v, k);
    } else if (k == "outer_reps") {
      c.outer_reps = json_get<std::uint64_t>(v, k);
    } else if (k == "lr_replicates") {
      c.lr_replicates = json_get<std::uint64_t>(v, k);
    } else if (k == "n_ref") {
      c.n_ref = json_get<std::uint64_t>(v, k);
    } else if (k == "seed") {
      c.seed = json_get<std::uint64_t>(v, k);
    } else if (k == "workers") {
      c.workers = json_get<unsigned>(v, k);
    } else if (k == "x_grid") {
      c.x_grid = json_get<std::vector<double>>(v, k);
    } else if (k == "n_grid") {
      c.n_grid = json_get<std::vector<std::uint64_t>>(v, k);
    } else if (k == "output") {
      c.output = json_get<std::string>(v, k);
    } else if (k == "long_output") {
      c.long_output = json_get<std::string>(v, k);
    } else if (k == "diagnostics_output") {
      c.diagnostics_output = json_get<std::string>(v, k);
    } else if (k == "input") {
      c.input = json_get<std::string>(v, k);
    } else if (k == "format") {
      c.format = json_get<std::string>(v, k);
    } else {
      throw UsageError("config: unknown key '" + k + "'");
    }
  }
}

inline std::optional<std::string> find_config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) {
        throw UsageError("--config needs a file path");
      }
      return args[i + 1];
    }
    if (args[i].rfind("--config=", 0) == 0) {
      return args[i].substr(9);
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Parses `args` (without the program name); values in --config are overridden by flags.
[[nodiscard]] inline RunConfig parse_config(const std::vector<std::string>& args) {
  RunConfig c;
  if (auto path = detail::find_config_path(args)) {
    try {
      detail::apply_config_file(io::parse_json(io::read_file(*path), *path), c);
    } catch (const io::FormatError& e) {
      throw UsageError(e.what());
    } catch (const io::IoError& e) {
      throw UsageError(e.what());
    }
  }

  CLI::App app{"Rare-event estimators for sums of heavy-tailed factors", "heavytail"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::uint64_t seed_value = c.seed.value_or(0);

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON file with default option values");
    sub->add_option("--seed", seed_value, "Master seed (required)");
    sub->add_option("--workers", c.workers, "Worker threads; HEAVYTAIL_WORKERS overrides")
        ->check(CLI::PositiveNumber);
    sub->add_option("--output,-o", c.output, "Output file (default: standard output)");
    sub->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  };
  auto model_opt = [&](CLI::App* sub) {
    sub->add_option("--model", c.model, "Model: preset name, inline JSON or JSON file");
  };

  auto* estimate = app.add_subcommand("estimate", "Estimate P[S_N > x] with one method");
  common(estimate);
  model_opt(estimate);
  estimate->add_option("--method", c.method)->check(CLI::IsMember({"crude", "cmc", "is", "twist"}));
  estimate->add_option("--x", c.x, "Threshold (lambda for twist)");
  estimate->add_option("--n", c.n, "Sample size")->check(CLI::PositiveNumber);
  estimate->add_option("--variance", c.variance, "Index variance for twist");
  estimate->add_option("--gaussian-index", c.gaussian_index, "Gaussian index model for twist (JSON)");

  auto* compare = app.add_subcommand("compare", "crude, cmc and is side by side against a reference");
  common(compare);
  model_opt(compare);
  compare->add_option("--x", c.x, "Threshold");
  compare->add_option("--n", c.n, "Sample size per method")->check(CLI::PositiveNumber);
  compare->add_option("--n-ref", c.n_ref, "Reference CMC sample size");

  auto* experiment = app.add_subcommand("experiment", "Deviation-probability experiment tables");
  common(experiment);
  experiment->add_option("--kind", c.kind)->check(CLI::IsMember({"var-c", "cat-const-min", "cat-var-min"}));
  experiment->add_option("--x", c.x, "Threshold for the catastrophe experiments");
  experiment->add_option("--x-grid", c.x_grid, "Thresholds for var-c")->delimiter(',');
  experiment->add_option("--n-grid", c.n_grid, "Inner sample sizes")->delimiter(',');
  experiment->add_option("--kappa", c.kappa, "Relative precision");
  experiment->add_option("--outer-reps,-R", c.outer_reps, "Estimates per deviation fraction");
  experiment->add_option("--lr-replicates", c.lr_replicates, "Log-ratio replicates per (x, n) cell");
  experiment->add_option("--n-ref", c.n_ref, "Reference CMC sample size");
  experiment->add_option("--long-output", c.long_output, "Per-estimate long-format CSV");
  experiment->add_option("--diagnostics-output", c.diagnostics_output, "Fit diagnostics CSV");

  auto* fit = app.add_subcommand("fit-r", "Refit rates from a long-format CSV");
  fit->add_option("--config", config_path, "JSON file with default option values");
  fit->add_option("--input", c.input, "Long-format CSV");
  fit->add_option("--outer-reps,-R", c.outer_reps, "Estimates per deviation fraction");
  fit->add_option("--output,-o", c.output, "Output file (default: standard output)");
  fit->add_option("--format", c.format)->check(CLI::IsMember({"csv", "json"}));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      throw HelpRequested(e.get_name() == "CallForHelp" && app.get_subcommands().empty()
                              ? app.help()
                              : (app.get_subcommands().empty() ? app.help()
                                                               : app.get_subcommands().front()->help()));
    }
    throw UsageError(e.what());
  }
  c.command = app.get_subcommands().front()->get_name();
  auto* sub = app.get_subcommands().front();
  if (sub->get_option_no_throw("--seed") != nullptr && sub->count("--seed") > 0) {
    c.seed = seed_value;
  }

  if (const char* env = std::getenv("HEAVYTAIL_WORKERS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long w = std::strtoul(env, &end, 10);
    if (*end != '\0' || w == 0 || w > 4096) {
      throw UsageError("HEAVYTAIL_WORKERS must be a positive integer");
    }
    c.workers = static_cast<unsigned>(w);
  }
  if (c.workers < 1) {
    throw UsageError("--workers must be >= 1");
  }

  if (c.command != "fit-r" && !c.seed) {
    throw UsageError("--seed is required (no default seed is drawn from the clock)");
  }
  if (c.command == "estimate" || c.command == "compare") {
    if (std::isnan(c.x)) {
      throw UsageError("--x is required");
    }
  }
  if (c.command == "experiment") {
    if (c.kind.empty()) {
      throw UsageError("--kind is required");
    }
    if (c.kind == "var-c" && c.x_grid.empty()) {
      c.x_grid = VarCConfig{}.x_grid;
    }
    if (c.kind != "var-c" && std::isnan(c.x)) {
      c.x = CatastropheConfig{}.x;
    }
  }
  if (c.command == "fit-r" && c.input.empty()) {
    throw UsageError("--input is required");
  }
  return c;
}

namespace detail {

inline void emit(const RunConfig& c, const io::Table& t, const std::string& path, std::ostream& out) {
  const std::string text = c.format == "json" ? io::to_json(t) : io::to_csv(t);
  if (path.empty()) {
    out << text;
  } else {
    io::write_atomic(path, text);
  }
}

inline std::string short_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string summary(const EstimateResult& r, double x) {
  const double h = r.ci_halfwidth();
  return std::string(to_string(r.method())) + ": x=" + short_real(x) + " n=" + std::to_string(r.n()) +
         " estimate=" + short_real(r.estimate()) + " relative_error=" + short_real(r.relative_error()) +
         " ci95=[" + short_real(r.estimate() - h) + ", " + short_real(r.estimate() + h) + "]";
}

inline GaussianFactorModel gaussian_index_model(const RunConfig& c) {
  if (c.gaussian_index.empty()) {
    return GaussianFactorModel::with_index_variance(c.variance);
  }
  const std::string text = c.gaussian_index.front() == '{' ? c.gaussian_index : io::read_file(c.gaussian_index);
  return io::parse_gaussian_index(io::parse_json(text, "gaussian index"));
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t tag) { return RandomStream(seed, {tag}).key(); }

inline EstimateResult run_method(Method m, const FactorModel& model, double x, std::uint64_t n, std::uint64_t seed,
                                 unsigned workers) {
  switch (m) {
    case Method::Crude:
      return split_across_workers(n, seed, workers,
                                  [&](std::uint64_t k, RandomStream& rng) { return crude_mc(model, x, k, rng); });
    case Method::Cmc:
      require_cmc_model(model);
      return split_across_workers(n, seed, workers,
                                  [&](std::uint64_t k, RandomStream& rng) { return cmc(model, x, k, rng); });
    case Method::IsPartition: {
      const auto proposals = default_is_proposals(model);
      validate_proposals(model, proposals);
      return split_across_workers(n, seed, workers, [&](std::uint64_t k, RandomStream& rng) {
        return is_partition(model, proposals, x, k, rng);
      });
    }
    case Method::GaussianTwist:
      break;
  }
  throw UnsupportedModelError("twist needs a gaussian index model");
}

inline const std::vector<std::string> estimate_header = {
    "method", "x", "n", "estimate", "std_error", "relative_error", "second_moment", "ci_low", "ci_high"};

inline std::vector<io::Cell> estimate_row(const EstimateResult& r, double x) {
  const double h = r.ci_halfwidth();
  return {std::string(to_string(r.method())), x, r.n(), r.estimate(), r.standard_error(), r.relative_error(),
          r.second_moment(), r.estimate() - h, r.estimate() + h};
}

inline int cmd_estimate(const RunConfig& c, std::ostream& out) {
  const Method m = io::parse_method(c.method);
  EstimateResult r = [&] {
    if (m == Method::GaussianTwist) {
      const auto g = gaussian_index_model(c);
      return split_across_workers(c.n, *c.seed, c.workers,
                                  [&](std::uint64_t k, RandomStream& rng) { return gaussian_twist(g, c.x, k, rng); });
    }
    return run_method(m, io::load_model(c.model), c.x, c.n, *c.seed, c.workers);
  }();
  if (!c.output.empty()) {
    io::Table t{estimate_header, {}};
    t.add(estimate_row(r, c.x));
    emit(c, t, c.output, out);
  }
  out << summary(r, c.x) << '\n';
  return ok;
}

inline int cmd_compare(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const FactorModel model = io::load_model(c.model);
  require_cmc_model(model);
  const RandomStream base(stream_seed(*c.seed, 1));
  const double mu_ref = estimate_mu_ref(model, c.x, c.n_ref, base, c.workers).estimate();
  io::Table t{{"method", "x", "n", "mu_ref", "estimate", "std_error", "relative_error", "ci_low", "ci_high",
               "relative_deviation"},
              {}};
  std::vector<std::string> lines;
  const Method methods[] = {Method::Crude, Method::Cmc, Method::IsPartition};
  std::vector<std::string> skipped;
  for (std::size_t k = 0; k < std::size(methods); ++k) {
    std::optional<EstimateResult> maybe;
    try {
      maybe = run_method(methods[k], model, c.x, c.n, stream_seed(*c.seed, 2 + k), c.workers);
    } catch (const UnsupportedModelError& e) {
      // is needs densities; the other two methods still run
      if (methods[k] != Method::IsPartition) {
        throw;
      }
      skipped.push_back(std::string(to_string(methods[k])) + ": skipped (" + e.what() + ")");
      continue;
    }
    const auto& r = *maybe;
    const double h = r.ci_halfwidth();
    t.add({std::string(to_string(r.method())), c.x, r.n(), mu_ref, r.estimate(), r.standard_error(),
           r.relative_error(), r.estimate() - h, r.estimate() + h, std::abs(r.estimate() - mu_ref) / mu_ref});
    lines.push_back(summary(r, c.x));
  }
  emit(c, t, c.output, out);
  if (!c.output.empty()) {
    for (const auto& l : lines) {
      out << l << '\n';
    }
  }
  for (const auto& l : skipped) {
    err << l << '\n';
  }
  return ok;
}

inline int cmd_experiment(const RunConfig& c, std::ostream& out) {
  const bool keep = !c.long_output.empty();
  TableResult res;
  std::string key;
  if (c.kind == "var-c") {
    VarCConfig v;
    v.x_grid = c.x_grid;
    v.n_grid = c.n_grid;
    v.kappa = c.kappa;
    v.outer_reps = c.outer_reps;
    v.lr_replicates = c.lr_replicates;
    v.n_ref = c.n_ref;
    v.seed = *c.seed;
    v.workers = c.workers;
    v.keep_trials = keep;
    res = run_var_c(v);
    key = "x";
  } else {
    CatastropheConfig cc;
    cc.x = c.x;
    cc.n_grid = c.n_grid;
    cc.kappa = c.kappa;
    cc.outer_reps = c.outer_reps;
    cc.lr_replicates = c.lr_replicates;
    cc.n_ref = c.n_ref;
    cc.seed = *c.seed;
    cc.workers = c.workers;
    cc.keep_trials = keep;
    const auto mode = c.kind == "cat-const-min" ? CatastropheMode::ConstMin : CatastropheMode::VarMin;
    res = run_catastrophe(cc, mode);
    key = mode == CatastropheMode::ConstMin ? "alpha_bar" : "alpha_min";
  }
  if (keep) {
    io::write_atomic(c.long_output, io::to_csv(io::long_table(res.trials)));
  }
  if (!c.diagnostics_output.empty()) {
    io::write_atomic(c.diagnostics_output, io::to_csv(io::diagnostics_table(res.curves)));
  }
  emit(c, io::experiment_table(res, key), c.output, out);
  if (!c.output.empty()) {
    std::size_t negative = 0;
    for (const auto& row : res.rows) {
      negative += row.r > 0.0 ? 0 : 1;
    }
    out << c.kind << ": " << res.rows.size() << " rows, " << negative << " without a positive rate\n";
  }
  return ok;
}

inline int cmd_fit_r(const RunConfig& c, std::ostream& out) {
  const auto trials = io::parse_long_csv(io::read_file(c.input));
  const auto curves = curves_from_trials(trials, c.outer_reps);
  emit(c, io::diagnostics_table(curves), c.output, out);
  return ok;
}

}  // namespace detail

/// Dispatches a parsed configuration; errors are mapped to exit codes.
[[nodiscard]] inline int run(const RunConfig& c, std::ostream& out, std::ostream& err) {
  try {
    if (c.command == "estimate") {
      return detail::cmd_estimate(c, out);
    }
    if (c.command == "compare") {
      return detail::cmd_compare(c, out, err);
    }
    if (c.command == "experiment") {
      return detail::cmd_experiment(c, out);
    }
    if (c.command == "fit-r") {
      return detail::cmd_fit_r(c, out);
    }
    err << "error: unknown command '" << c.command << "'\n";
    return usage;
  } catch (const io::FormatError& e) {
    err << "error: " << e.what() << '\n';
    return usage;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return usage;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << '\n';
    return usage;
  } catch (const ModelError& e) {
    err << "model error: " << e.what() << '\n';
    return model_error;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return numeric_failure;
  } catch (const io::IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return io_failure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return failure;
  }
}

/// Parse and run; the whole program in one call.
[[nodiscard]] inline int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig c;
  try {
    c = parse_config(args);
  } catch (const HelpRequested& e) {
    out << e.what();
    return ok;
  } catch (const UsageError& e) {
    err << e.what() << '\n';
    return usage;
  }
  return run(c, out, err);
}

}  // namespace heavytail::cli
