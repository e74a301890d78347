#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "heavytail/error.hpp"
#include "heavytail/reml.hpp"
#include "oracles.hpp"

using namespace heavytail;

namespace {

std::vector<GroupedObservation> simulate(double b0, double b1, double tau, double sigma, int groups, int reps,
                                         std::uint64_t seed, double x_step = 2000.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<GroupedObservation> out;
  for (int g = 0; g < groups; ++g) {
    const double x = x_step * (g + 1);
    const double gamma = tau * z(gen);
    for (int j = 0; j < reps; ++j) {
      out.push_back({g, x, b0 + (b1 + gamma) * x + sigma * z(gen)});
    }
  }
  return out;
}

oracle::Line ols(const std::vector<GroupedObservation>& obs) {
  std::vector<double> x, y;
  for (const auto& o : obs) {
    x.push_back(o.x);
    y.push_back(o.y);
  }
  return oracle::least_squares(x, y);
}

}  // namespace

TEST(Reml, ZeroTauReproducesOls) {
  const auto obs = simulate(1.0, -0.01, 0.0, 0.1, 10, 50, 1);
  const auto fit = reml_fit(obs);
  const auto ref = ols(obs);
  EXPECT_NEAR(fit.beta1, ref.slope, 1e-6);
  EXPECT_NEAR(fit.beta0, ref.intercept, 1e-6);
  const auto pinned = reml_fit(obs, {.fix_tau2_zero = true});
  EXPECT_NEAR(pinned.beta1, ref.slope, 1e-12);
  EXPECT_EQ(pinned.tau2, 0.0);
  const auto lib = ols_fit(obs);
  EXPECT_NEAR(lib.slope, ref.slope, 1e-12);
}

TEST(Reml, SingleReplicatePerGroupWithTauPinned) {
  const auto obs = simulate(0.5, 0.02, 0.0, 0.3, 12, 1, 2, 1.0);
  const auto fit = reml_fit(obs, {.fix_tau2_zero = true});
  const auto ref = ols(obs);
  EXPECT_NEAR(fit.beta1, ref.slope, 1e-10);
  EXPECT_NEAR(fit.beta0, ref.intercept, 1e-10);
  EXPECT_THROW((void)reml_fit(obs), RankError);
}

TEST(Reml, RecoversVarianceComponents) {
  const auto obs = simulate(0.0, -0.005, 0.001, 0.2, 40, 50, 3);
  const auto fit = reml_fit(obs);
  EXPECT_NEAR(fit.sigma2, 0.04, 0.004);
  EXPECT_GT(fit.tau2, 0.0);
  EXPECT_NEAR(std::sqrt(fit.tau2), 0.001, 0.0005);
  EXPECT_NEAR(fit.beta1, -0.005, 3.0 * fit.beta1_se);
}

TEST(Reml, MaximisesTheRestrictedLikelihood) {
  const auto obs = simulate(1.0, -0.003, 0.0005, 0.2, 10, 30, 4);
  const auto fit = reml_fit(obs);
  // Brute-force profile: the fitted ratio must beat a fine grid of alternatives.
  std::map<std::int64_t, detail::RemlGroup> g;
  double scale = 0;
  for (const auto& o : obs) {
    scale = std::max(scale, std::abs(o.x));
  }
  for (const auto& o : obs) {
    auto& s = g[o.group];
    const double x = o.x / scale;
    s.n += 1;
    s.sx += x;
    s.sxx += x * x;
    s.sy += o.y;
    s.sxy += x * o.y;
    s.syy += o.y * o.y;
  }
  std::vector<detail::RemlGroup> groups;
  for (const auto& [k, v] : g) {
    groups.push_back(v);
  }
  const double n = static_cast<double>(obs.size());
  for (double lam = 0.0; lam < 50.0; lam += 0.05) {
    EXPECT_GE(fit.restricted_loglik, detail::reml_profile(groups, n, lam).loglik - 1e-9) << lam;
  }
}

TEST(Reml, BootstrapCalibrationOfTheSlope) {
  constexpr int reps = 100;
  double sum = 0.0, sum_sq = 0.0;
  int covered = 0;
  for (int b = 0; b < reps; ++b) {
    const auto obs = simulate(0.0, -0.005, 0.001, 0.2, 10, 50, 100 + b);
    const auto fit = reml_fit(obs);
    sum += fit.beta1;
    sum_sq += fit.beta1 * fit.beta1;
    covered += std::abs(fit.beta1 + 0.005) <= 3.0 * fit.beta1_se ? 1 : 0;
  }
  const double mean = sum / reps;
  const double sd = std::sqrt(sum_sq / reps - mean * mean);
  EXPECT_NEAR(mean, -0.005, 3.0 * sd / std::sqrt(reps));
  EXPECT_GE(covered, 95);
}

TEST(Reml, DegenerateDesigns) {
  std::vector<GroupedObservation> same_x = {{0, 5.0, 1.0}, {0, 5.0, 2.0}, {1, 5.0, 3.0}, {1, 5.0, 1.5}};
  EXPECT_THROW((void)reml_fit(same_x), RankError);
  std::vector<GroupedObservation> one_group = {{0, 1.0, 1.0}, {0, 2.0, 2.0}, {0, 3.0, 3.5}};
  EXPECT_THROW((void)reml_fit(one_group), RankError);
  std::vector<GroupedObservation> too_few = {{0, 1.0, 1.0}, {1, 2.0, 2.0}};
  EXPECT_THROW((void)reml_fit(too_few), RankError);
  std::vector<GroupedObservation> bad = {{0, 1.0, 1.0}, {1, 2.0, std::nan("")}, {1, 3.0, 1.0}};
  EXPECT_THROW((void)reml_fit(bad), DomainError);
}
