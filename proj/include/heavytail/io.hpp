#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unistd.h>
#include <variant>
#include <vector>

#include <json.hpp>

#include "heavytail/distribution.hpp"
#include "heavytail/efficiency_lab.hpp"
#include "heavytail/error.hpp"
#include "heavytail/estimators.hpp"
#include "heavytail/factor_model.hpp"

namespace heavytail::io {

using nlohmann::json;

class IoError : public Error {
public:
  using Error::Error;
};

/// Malformed model or config document.
class FormatError : public Error {
public:
  using Error::Error;
};

/// Shortest text that round-trips through 17 significant digits.
[[nodiscard]] inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Tables

using Cell = std::variant<double, std::uint64_t, std::string>;

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row) {
    if (row.size() != header.size()) {
      throw ShapeError("table row width does not match header");
    }
    rows.push_back(std::move(row));
  }
};

[[nodiscard]] inline std::string cell_text(const Cell& c) {
  if (const auto* d = std::get_if<double>(&c)) {
    return format_real(*d);
  }
  if (const auto* u = std::get_if<std::uint64_t>(&c)) {
    return std::to_string(*u);
  }
  return std::get<std::string>(c);
}

[[nodiscard]] inline std::string to_csv(const Table& t) {
  std::string out;
  auto line = [&out](const auto& cells, auto&& text) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) {
        out += ',';
      }
      out += text(cells[i]);
    }
    out += '\n';
  };
  line(t.header, [](const std::string& s) { return s; });
  for (const auto& r : t.rows) {
    line(r, cell_text);
  }
  return out;
}

/// JSON array of objects keyed by the header; non-finite reals become null.
[[nodiscard]] inline std::string to_json(const Table& t) {
  json arr = json::array();
  for (const auto& r : t.rows) {
    json obj = json::object();
    for (std::size_t i = 0; i < r.size(); ++i) {
      std::visit(
          [&](const auto& v) {
            using V = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<V, double>) {
              obj[t.header[i]] = std::isfinite(v) ? json(v) : json(nullptr);
            } else {
              obj[t.header[i]] = v;
            }
          },
          r[i]);
    }
    arr.push_back(std::move(obj));
  }
  return arr.dump(2) + "\n";
}

/// Writes `contents` to a sibling temp file and renames it over `path`.
inline void write_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) {
      throw IoError("cannot open " + tmp.string() + " for writing");
    }
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    f.flush();
    if (!f) {
      f.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename temp file onto " + path.string());
  }
}

[[nodiscard]] inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw IoError("cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

[[nodiscard]] inline json parse_json(std::string_view text, std::string_view what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string(what) + ": malformed JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Model documents
//
//   {"factors": [{"kind": "pareto", "alpha": 1.5, "scale": 1}, ...], "reference": {...}}
//   {"pareto_alphas": [1, 1.5, 2], "scale": 1}
//   {"preset": "ten-pareto"}
//
// Factor kinds: pareto (alpha, scale), shifted_pareto (alpha, scale, shift),
// log_pareto (alpha, p, threshold), gaussian (sigma, mean).

namespace detail {

inline double number(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) {
    return fallback;
  }
  if (!j.at(key).is_number()) {
    throw FormatError(std::string("model: '") + key + "' must be a number");
  }
  return j.at(key).get<double>();
}

inline double required(const json& j, const char* key) {
  if (!j.contains(key)) {
    throw FormatError(std::string("model: factor is missing '") + key + "'");
  }
  return number(j, key, 0.0);
}

inline void allow_keys(const json& j, std::initializer_list<std::string_view> keys, std::string_view where) {
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (auto allowed : keys) {
      known = known || k == allowed;
    }
    if (!known) {
      throw FormatError(std::string(where) + ": unknown key '" + k + "'");
    }
  }
}

}  // namespace detail

[[nodiscard]] inline FactorDistribution parse_factor(const json& j) {
  if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string()) {
    throw FormatError("model: each factor needs a string 'kind'");
  }
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "pareto") {
    detail::allow_keys(j, {"kind", "alpha", "scale"}, "pareto factor");
    return FactorDistribution::pareto(detail::required(j, "alpha"), detail::number(j, "scale", 1.0));
  }
  if (kind == "shifted_pareto") {
    detail::allow_keys(j, {"kind", "alpha", "scale", "shift"}, "shifted_pareto factor");
    return FactorDistribution::shifted_pareto(detail::required(j, "alpha"), detail::number(j, "scale", 1.0),
                                              detail::number(j, "shift", 0.0));
  }
  if (kind == "log_pareto") {
    detail::allow_keys(j, {"kind", "alpha", "p", "threshold"}, "log_pareto factor");
    const double alpha = detail::required(j, "alpha");
    const double p = detail::number(j, "p", 0.0);
    if (j.contains("threshold")) {
      return FactorDistribution::log_pareto(alpha, p, detail::number(j, "threshold", 0.0));
    }
    return FactorDistribution::log_pareto(alpha, p);
  }
  if (kind == "gaussian") {
    detail::allow_keys(j, {"kind", "sigma", "mean"}, "gaussian factor");
    return FactorDistribution::gaussian(detail::required(j, "sigma"), detail::number(j, "mean", 0.0));
  }
  throw FormatError("model: unknown factor kind '" + kind + "'");
}

[[nodiscard]] inline json factor_to_json(const FactorDistribution& f) {
  switch (f.kind()) {
    case DistributionKind::Pareto:
      return {{"kind", "pareto"}, {"alpha", f.alpha()}, {"scale", f.scale()}};
    case DistributionKind::ShiftedPareto:
      return {{"kind", "shifted_pareto"}, {"alpha", f.alpha()}, {"scale", f.scale()}, {"shift", f.shift()}};
    case DistributionKind::LogPareto:
      return {{"kind", "log_pareto"}, {"alpha", f.alpha()}, {"p", f.log_exponent()}, {"threshold", f.scale()}};
    case DistributionKind::Gaussian:
      return {{"kind", "gaussian"}, {"sigma", f.sigma()}, {"mean", f.shift()}};
  }
  return {};
}

/// Named models: ten-pareto or var-c (ten Pareto, alpha on [1, 3]) and two-pareto (two Pareto(1)).
[[nodiscard]] inline FactorModel preset_model(std::string_view name) {
  if (name == "ten-pareto" || name == "var-c") {
    return variable_threshold_model();
  }
  if (name == "two-pareto") {
    const double a[] = {1.0, 1.0};
    return pareto_model(a);
  }
  throw FormatError("model: unknown preset '" + std::string(name) + "'");
}

[[nodiscard]] inline FactorModel parse_model(const json& j) {
  if (!j.is_object()) {
    throw FormatError("model: document must be a JSON object");
  }
  if (j.contains("preset")) {
    detail::allow_keys(j, {"preset"}, "model");
    if (!j.at("preset").is_string()) {
      throw FormatError("model: 'preset' must be a string");
    }
    return preset_model(j.at("preset").get<std::string>());
  }
  if (j.contains("pareto_alphas")) {
    detail::allow_keys(j, {"pareto_alphas", "scale"}, "model");
    const auto& a = j.at("pareto_alphas");
    if (!a.is_array() || a.empty()) {
      throw FormatError("model: 'pareto_alphas' must be a non-empty array");
    }
    std::vector<double> alphas;
    for (const auto& v : a) {
      if (!v.is_number()) {
        throw FormatError("model: 'pareto_alphas' entries must be numbers");
      }
      alphas.push_back(v.get<double>());
    }
    return pareto_model(alphas, detail::number(j, "scale", 1.0));
  }
  detail::allow_keys(j, {"factors", "reference"}, "model");
  if (!j.contains("factors") || !j.at("factors").is_array() || j.at("factors").empty()) {
    throw FormatError("model: 'factors' must be a non-empty array");
  }
  std::vector<FactorDistribution> factors;
  for (const auto& f : j.at("factors")) {
    factors.push_back(parse_factor(f));
  }
  std::optional<FactorDistribution> reference;
  if (j.contains("reference")) {
    reference = parse_factor(j.at("reference"));
  }
  return FactorModel(std::move(factors), reference);
}

[[nodiscard]] inline json model_to_json(const FactorModel& m) {
  json factors = json::array();
  for (const auto& f : m.factors()) {
    factors.push_back(factor_to_json(f));
  }
  return {{"factors", factors}, {"reference", factor_to_json(m.reference_tail())}};
}

/// Model from an inline JSON object, a preset name or a path to a JSON file.
[[nodiscard]] inline FactorModel load_model(const std::string& spec) {
  if (spec.empty()) {
    throw FormatError("model: empty model specification");
  }
  if (spec.front() == '{') {
    return parse_model(parse_json(spec, "model"));
  }
  if (!std::filesystem::exists(spec) && spec.find('/') == std::string::npos &&
      spec.find(".json") == std::string::npos) {
    return preset_model(spec);
  }
  return parse_model(parse_json(read_file(spec), spec));
}

/// Gaussian index model: {"loadings": [...], "idiosyncratic_variances": [...]}.
[[nodiscard]] inline GaussianFactorModel parse_gaussian_index(const json& j) {
  detail::allow_keys(j, {"loadings", "idiosyncratic_variances"}, "gaussian index");
  auto vec = [&](const char* key) {
    std::vector<double> v;
    if (!j.contains(key)) {
      return v;
    }
    if (!j.at(key).is_array()) {
      throw FormatError(std::string("gaussian index: '") + key + "' must be an array");
    }
    for (const auto& e : j.at(key)) {
      if (!e.is_number()) {
        throw FormatError(std::string("gaussian index: '") + key + "' entries must be numbers");
      }
      v.push_back(e.get<double>());
    }
    return v;
  };
  return GaussianFactorModel(vec("loadings"), vec("idiosyncratic_variances"));
}

// ---------------------------------------------------------------------------
// Experiment output

[[nodiscard]] inline Table experiment_table(const TableResult& res, std::string_view key_name) {
  Table t{{std::string(key_name), "mu", "r"}, {}};
  for (const auto& row : res.rows) {
    t.add({row.key, row.mu, row.r});
  }
  return t;
}

/// Fit diagnostics per curve: the fixed and variance components and the censored count.
[[nodiscard]] inline Table diagnostics_table(std::span<const LrCurve> curves) {
  Table t{{"x", "r", "beta0", "beta1", "tau2", "sigma2", "records", "censored"}, {}};
  const double nan = std::nan("");
  for (const auto& c : curves) {
    const auto records = static_cast<std::uint64_t>(c.records.size());
    const auto censored = static_cast<std::uint64_t>(c.censored);
    if (c.fit) {
      t.add({c.x, c.rate(), c.fit->beta0, c.fit->beta1, c.fit->tau2, c.fit->sigma2, records, censored});
    } else {
      t.add({c.x, nan, nan, nan, nan, nan, records, censored});
    }
  }
  return t;
}

inline const std::vector<std::string> long_header = {"x", "n", "replicate", "method", "estimate", "deviated"};

[[nodiscard]] inline Table long_table(std::span<const TrialRecord> trials) {
  Table t{long_header, {}};
  t.rows.reserve(trials.size());
  for (const auto& r : trials) {
    t.rows.push_back({r.x, r.n, r.replicate, std::string(to_string(r.method)), r.estimate,
                      static_cast<std::uint64_t>(r.deviated ? 1 : 0)});
  }
  return t;
}

[[nodiscard]] inline Method parse_method(std::string_view s) {
  if (s == "crude") {
    return Method::Crude;
  }
  if (s == "cmc") {
    return Method::Cmc;
  }
  if (s == "is") {
    return Method::IsPartition;
  }
  if (s == "twist") {
    return Method::GaussianTwist;
  }
  throw FormatError("unknown method '" + std::string(s) + "'");
}

/// Parses the long-format CSV written by the experiment command.
[[nodiscard]] inline std::vector<TrialRecord> parse_long_csv(std::string_view text) {
  std::vector<TrialRecord> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) {
      return false;
    }
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) {
      end = text.size();
    }
    line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') {
      line.remove_suffix(1);
    }
    pos = end + 1;
    ++line_no;
    return true;
  };
  auto split = [](std::string_view line) {
    std::vector<std::string> f;
    std::size_t start = 0;
    while (true) {
      auto c = line.find(',', start);
      f.emplace_back(line.substr(start, c == std::string_view::npos ? std::string_view::npos : c - start));
      if (c == std::string_view::npos) {
        break;
      }
      start = c + 1;
    }
    return f;
  };
  std::string_view line;
  if (!next_line(line) || split(line) != long_header) {
    throw FormatError("long csv: header must be x,n,replicate,method,estimate,deviated");
  }
  while (next_line(line)) {
    if (line.empty()) {
      continue;
    }
    const auto f = split(line);
    if (f.size() != long_header.size()) {
      throw FormatError("long csv: line " + std::to_string(line_no) + " has " + std::to_string(f.size()) +
                        " fields");
    }
    try {
      std::size_t used = 0;
      TrialRecord r{};
      r.x = std::stod(f[0], &used);
      r.n = std::stoull(f[1]);
      r.replicate = std::stoull(f[2]);
      r.method = parse_method(f[3]);
      r.estimate = std::stod(f[4]);
      if (f[5] != "0" && f[5] != "1") {
        throw FormatError("deviated must be 0 or 1");
      }
      r.deviated = f[5] == "1";
      out.push_back(r);
    } catch (const std::logic_error&) {
      throw FormatError("long csv: malformed number on line " + std::to_string(line_no));
    } catch (const Error& e) {
      throw FormatError("long csv: line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace heavytail::io
