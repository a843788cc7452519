#include <gtest/gtest.h>

#include "spade/sampler.hpp"

using namespace spade;

namespace {

// G entries straight from the definition, in extended precision.
long double entry(const DeterminantalModel& m, std::span<const double> v, std::size_t i, std::size_t j) {
  long double q = 0;
  const std::size_t n = m.block();
  for (std::size_t t = 0; t < n; ++t) {
    const long double diff = v[j * n + t] - m.centers()[i][t];
    q += diff * diff;
  }
  const long double phi = std::exp(-0.5L * q) / std::pow(2.0L * std::numbers::pi_v<long double>, 0.5L * n);
  return i == j ? phi : m.coupling() * phi;
}

long double det3(const DeterminantalModel& m, std::span<const double> v) {
  auto g = [&](std::size_t i, std::size_t j) { return entry(m, v, i, j); };
  return g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1)) - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0)) +
         g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0));
}

}  // namespace

TEST(Centers, GridOrderAndRuns) {
  const auto grid = center_grid();
  ASSERT_EQ(grid.size(), 360u);
  EXPECT_EQ(grid[0], (std::array<double, 3>{-4, -2, -2}));
  EXPECT_EQ(grid[1], (std::array<double, 3>{-3, -2, -2}));
  EXPECT_EQ(grid[10], (std::array<double, 3>{-4, -1, -2}));
  const auto c = default_centers(2, 6);
  EXPECT_EQ(c[1], (std::vector<double>{-2, -2, -2, -1, -2, -2}));
  const auto w = default_centers(1, 3 * 361);
  EXPECT_EQ(w[0][3 * 360], -4.0);  // wraps to the first grid point
  EXPECT_THROW(default_centers(2, 4), Error);
}

TEST(Model, DefaultCouplingsAndShapes) {
  EXPECT_EQ(default_coupling(12), 0.6);
  EXPECT_EQ(default_coupling(36), 0.3);
  EXPECT_EQ(default_coupling(120), 0.05);
  EXPECT_EQ(default_coupling(1080), 0.02);
  EXPECT_FALSE(default_coupling(13));
  try {
    DeterminantalModel(10, 4, 0.6);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_shape);
  }
  EXPECT_THROW(DeterminantalModel(12, 4, 1.5), Error);
}

TEST(Determinant, TwoByTwoCofactor) {
  DeterminantalModel m(6, 2, 0.6);
  RngStream rng(61);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> v(6);
    for (std::size_t j = 0; j < 6; ++j) v[j] = m.center_state()[j] + 1.5 * rng.normal();
    const long double ref = entry(m, v, 0, 0) * entry(m, v, 1, 1) - entry(m, v, 0, 1) * entry(m, v, 1, 0);
    const auto ld = det_g(m, v);
    ASSERT_NE(ref, 0.0L);
    EXPECT_EQ(ld.sign, ref > 0 ? 1 : -1);
    EXPECT_NEAR(ld.log_abs, static_cast<double>(std::log(std::abs(ref))), 1e-9);
  }
}

TEST(Determinant, ThreeByThreeCofactor) {
  DeterminantalModel m(9, 3, 0.6);
  RngStream rng(62);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> v(9);
    for (std::size_t j = 0; j < 9; ++j) v[j] = m.center_state()[j] + 1.2 * rng.normal();
    const long double ref = det3(m, v);
    const auto ld = det_g(m, v);
    if (std::abs(ref) < 1e-300L) continue;
    EXPECT_EQ(ld.sign, ref > 0 ? 1 : -1);
    EXPECT_NEAR(ld.log_abs, static_cast<double>(std::log(std::abs(ref))), 1e-6);
  }
}

TEST(Determinant, FarStatesDoNotUnderflow) {
  DeterminantalModel m(12, 4, 0.6);
  std::vector<double> v(12, 40.0);
  const auto ld = det_g(m, v);
  EXPECT_TRUE(std::isfinite(ld.log_abs));
  EXPECT_LT(ld.log_abs, -1000.0);
  std::vector<double> bad(12, std::numeric_limits<double>::quiet_NaN());
  EXPECT_THROW(det_g(m, bad), Error);
}

TEST(Determinant, UncoupledIsProductOfBumps) {
  DeterminantalModel m(6, 2, 0.0);
  std::vector<double> v = m.center_state();
  v[0] += 0.3;
  const auto ld = det_g(m, v);
  EXPECT_EQ(ld.sign, 1);
  EXPECT_NEAR(ld.log_abs, m.log_phi(0, v, 0) + m.log_phi(1, v, 1), 1e-12);
}

TEST(Mcmc, RetainedCountsSumToTotal) {
  McmcConfig cfg;
  cfg.total_samples = 1001;
  cfg.chains = 64;
  std::size_t sum = 0;
  for (std::size_t c = 0; c < cfg.chains; ++c) sum += cfg.retained(c);
  EXPECT_EQ(sum, 1001u);
  EXPECT_EQ(cfg.retained(0), 16u);
  EXPECT_EQ(cfg.retained(63), 15u);
}

TEST(Mcmc, SampleHonoursCountAndIsWorkerInvariant) {
  DeterminantalModel m(12, 4, 0.6);
  McmcConfig cfg;
  cfg.total_samples = 700;
  cfg.burn_in = 200;
  cfg.chains = 8;
  cfg.seed = 4;
  const auto a = sample(m, cfg, 1);
  const auto b = sample(m, cfg, 4);
  EXPECT_EQ(a.positives.size() + a.negatives.size() + a.discarded, 700u);
  EXPECT_EQ(a.positives, b.positives);
  EXPECT_EQ(a.negatives, b.negatives);
  EXPECT_GT(a.acceptance, 0.0);
  EXPECT_LE(a.acceptance, 1.0);
}

TEST(Mcmc, ChainsUseDistinctStreams) {
  DeterminantalModel m(12, 4, 0.6);
  McmcConfig cfg;
  cfg.total_samples = 20;
  cfg.burn_in = 5;
  cfg.chains = 2;
  const auto c0 = run_chain(m, cfg, 0), c1 = run_chain(m, cfg, 1);
  EXPECT_NE(c0.states, c1.states);
  EXPECT_EQ(c0.states, run_chain(m, cfg, 0).states);
}

TEST(Mcmc, RankOneTargetIsTheGaussianBump) {
  // With one block |det G| is the standard Gaussian around the center, so
  // the walk must reproduce its mean and unit variance.
  DeterminantalModel m(3, 1, 0.0);
  McmcConfig cfg;
  cfg.total_samples = 40000;
  cfg.burn_in = 500;
  cfg.chains = 8;
  cfg.stddev = 1.0;
  cfg.thin = 2;
  const auto r = sample(m, cfg, 4);
  ASSERT_EQ(r.positives.size(), 40000u);
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0, ss = 0;
    for (Index i = 0; i < r.positives.size(); ++i) {
      const double x = r.positives.at(i, j) - m.centers()[0][j];
      s += x;
      ss += x * x;
    }
    const double mean = s / 40000.0, var = ss / 40000.0 - mean * mean;
    EXPECT_NEAR(mean, 0.0, 0.06);
    EXPECT_NEAR(var, 1.0, 0.08);
  }
}
