#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "heavytail/error.hpp"

namespace heavytail {

/// One observation of the random-slope model: group index, covariate, response.
struct GroupedObservation {
  std::int64_t group;
  double x;
  double y;
};

/// REML estimates for Y_ij = b0 + b1 X_ij + g_i X_ij + e_ij, g_i ~ N(0, tau2), e_ij ~ N(0, sigma2).
struct RemlFit {
  double beta0 = 0.0;
  double beta1 = 0.0;
  double tau2 = 0.0;
  double sigma2 = 0.0;
  /// Model-based standard errors of the fixed effects.
  double beta0_se = 0.0;
  double beta1_se = 0.0;
  double restricted_loglik = 0.0;
  std::size_t groups = 0;
  std::size_t observations = 0;
};

struct RemlOptions {
  /// Pin tau2 = 0; the fit then reduces to ordinary least squares.
  bool fix_tau2_zero = false;
  /// Relative tolerance on the variance ratio tau2 / sigma2.
  double ratio_tolerance = 1e-8;
};

namespace detail {

struct RemlGroup {
  double n = 0, sx = 0, sxx = 0, sy = 0, sxy = 0, syy = 0;
};

// Profiled quantities at a fixed ratio lambda = tau2 / sigma2 (covariate already scaled).
struct RemlProfile {
  double loglik;
  double beta0, beta1;
  double sigma2;
  std::array<double, 3> a_inv;  // (0,0), (0,1), (1,1) of (X' V^-1 X)^-1
};

// V_i = I + lambda z z' with z = x_i, so V_i^-1 = I - c z z', c = lambda / (1 + lambda z'z).
inline RemlProfile reml_profile(std::span<const RemlGroup> groups, double total, double lambda) {
  double a00 = 0, a01 = 0, a11 = 0, b0 = 0, b1 = 0, q = 0, logdet_v = 0;
  for (const auto& g : groups) {
    const double ztz = g.sxx;
    const double c = lambda / (1.0 + lambda * ztz);
    logdet_v += std::log1p(lambda * ztz);
    // X'z = (sum x, sum x^2), z'y = sum xy.
    a00 += g.n - c * g.sx * g.sx;
    a01 += g.sx - c * g.sx * g.sxx;
    a11 += g.sxx - c * g.sxx * g.sxx;
    b0 += g.sy - c * g.sx * g.sxy;
    b1 += g.sxy - c * g.sxx * g.sxy;
    q += g.syy - c * g.sxy * g.sxy;
  }
  const double det = a00 * a11 - a01 * a01;
  if (!(det > 0.0) || !std::isfinite(det)) {
    throw RankError("reml_fit: fixed-effect design is singular");
  }
  const double i00 = a11 / det;
  const double i01 = -a01 / det;
  const double i11 = a00 / det;
  const double beta0 = i00 * b0 + i01 * b1;
  const double beta1 = i01 * b0 + i11 * b1;
  const double rss = std::max(q - (beta0 * b0 + beta1 * b1), 0.0);
  const double dof = total - 2.0;
  const double sigma2 = rss / dof;
  const double loglik =
      -0.5 * (dof * std::log(sigma2 > 0.0 ? sigma2 : std::numeric_limits<double>::min()) + logdet_v + std::log(det));
  return {loglik, beta0, beta1, sigma2, {i00, i01, i11}};
}

}  // namespace detail

/// Restricted maximum likelihood fit of the random-slope model.
///
/// beta and sigma2 are profiled out in closed form; the remaining variance ratio
/// tau2 / sigma2 is found by a coarse scan followed by golden-section search on a
/// bounded reparametrisation, with the boundary tau2 = 0 always considered.
[[nodiscard]] inline RemlFit reml_fit(std::span<const GroupedObservation> observations, RemlOptions options = {}) {
  if (observations.size() < 3) {
    throw RankError("reml_fit: need at least 3 observations");
  }
  double x_scale = 0.0;
  for (const auto& o : observations) {
    if (!std::isfinite(o.x) || !std::isfinite(o.y)) {
      throw DomainError("reml_fit: observations must be finite");
    }
    x_scale = std::max(x_scale, std::abs(o.x));
  }
  const double x0 = observations.front().x;
  const bool all_equal = std::all_of(observations.begin(), observations.end(),
                                     [x0](const GroupedObservation& o) { return o.x == x0; });
  if (all_equal || x_scale == 0.0) {
    throw RankError("reml_fit: all covariate values are equal");
  }

  std::map<std::int64_t, detail::RemlGroup> by_group;
  for (const auto& o : observations) {
    auto& g = by_group[o.group];
    const double x = o.x / x_scale;
    g.n += 1.0;
    g.sx += x;
    g.sxx += x * x;
    g.sy += o.y;
    g.sxy += x * o.y;
    g.syy += o.y * o.y;
  }
  std::vector<detail::RemlGroup> groups;
  groups.reserve(by_group.size());
  bool replicated = false;
  for (const auto& [id, g] : by_group) {
    groups.push_back(g);
    replicated = replicated || g.n >= 2.0;
  }
  if (groups.size() < 2) {
    throw RankError("reml_fit: need at least 2 groups");
  }
  if (!options.fix_tau2_zero && !replicated) {
    throw RankError("reml_fit: random slope is not identifiable without a replicated group");
  }
  const double total = static_cast<double>(observations.size());

  double mean_ztz = 0.0;
  for (const auto& g : groups) {
    mean_ztz += g.sxx;
  }
  mean_ztz /= static_cast<double>(groups.size());
  // lambda * mean z'z = u / (1 - u) maps u in [0, 1) onto [0, inf).
  auto lambda_of = [mean_ztz](double u) { return u / (1.0 - u) / mean_ztz; };
  auto objective = [&](double u) { return detail::reml_profile(groups, total, lambda_of(u)).loglik; };

  double best_u = 0.0;
  if (!options.fix_tau2_zero) {
    constexpr double u_max = 1.0 - 1e-12;
    constexpr int scan = 64;
    double best_val = objective(0.0);
    int best_k = 0;
    for (int k = 1; k <= scan; ++k) {
      const double u = u_max * static_cast<double>(k) / scan;
      const double v = objective(u);
      if (v > best_val) {
        best_val = v;
        best_k = k;
      }
    }
    double lo = u_max * std::max(0, best_k - 1) / scan;
    double hi = u_max * std::min(scan, best_k + 1) / scan;
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = hi - inv_phi * (hi - lo);
    double d = lo + inv_phi * (hi - lo);
    double fc = objective(c);
    double fd = objective(d);
    for (int it = 0; it < 500; ++it) {
      const double mid = 0.5 * (lo + hi);
      // d lambda / lambda = du / (u (1 - u)).
      const double rel = (hi - lo) / std::max(mid * (1.0 - mid), 1e-300);
      if (rel < options.ratio_tolerance || hi - lo < 1e-16) {
        break;
      }
      if (fc > fd) {
        hi = d;
        d = c;
        fd = fc;
        c = hi - inv_phi * (hi - lo);
        fc = objective(c);
      } else {
        lo = c;
        c = d;
        fc = fd;
        d = lo + inv_phi * (hi - lo);
        fd = objective(d);
      }
    }
    const double u_star = 0.5 * (lo + hi);
    best_u = objective(u_star) > objective(0.0) ? u_star : 0.0;
  }

  const double lambda = best_u == 0.0 ? 0.0 : lambda_of(best_u);
  const auto prof = detail::reml_profile(groups, total, lambda);
  RemlFit fit;
  fit.beta0 = prof.beta0;
  fit.beta1 = prof.beta1 / x_scale;
  fit.sigma2 = prof.sigma2;
  fit.tau2 = lambda * prof.sigma2 / (x_scale * x_scale);
  fit.beta0_se = std::sqrt(prof.sigma2 * prof.a_inv[0]);
  fit.beta1_se = std::sqrt(prof.sigma2 * prof.a_inv[2]) / x_scale;
  fit.restricted_loglik = prof.loglik;
  fit.groups = groups.size();
  fit.observations = observations.size();
  return fit;
}

/// Ordinary least-squares slope and intercept; the reference the tau2 = 0 fit must match.
struct OlsFit {
  double intercept;
  double slope;
};

[[nodiscard]] inline OlsFit ols_fit(std::span<const GroupedObservation> observations) {
  double mx = 0, my = 0;
  for (const auto& o : observations) {
    mx += o.x;
    my += o.y;
  }
  const double n = static_cast<double>(observations.size());
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (const auto& o : observations) {
    sxx += (o.x - mx) * (o.x - mx);
    sxy += (o.x - mx) * (o.y - my);
  }
  if (!(sxx > 0.0)) {
    throw RankError("ols_fit: all covariate values are equal");
  }
  const double slope = sxy / sxx;
  return {my - slope * mx, slope};
}

}  // namespace heavytail
