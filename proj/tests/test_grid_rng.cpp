#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fbsde/rng.hpp"
#include "fbsde/stats.hpp"
#include "fbsde/time_grid.hpp"

using namespace fbsde;

TEST(TimeGrid, NodesAndStep) {
  TimeGrid grid(0.0, 1.0, 7);
  EXPECT_EQ(grid.n_steps(), 7u);
  EXPECT_EQ(grid.n_nodes(), 8u);
  EXPECT_DOUBLE_EQ(grid.node(0), 0.0);
  EXPECT_DOUBLE_EQ(grid.node(7), 1.0);
  EXPECT_NEAR(grid.step() * 7.0, 1.0, 1e-15);
  for (std::size_t k = 0; k + 1 < grid.n_nodes(); ++k) {
    EXPECT_LT(grid.node(k), grid.node(k + 1));
  }
}

TEST(TimeGrid, ExactEndpointsOffsetHorizon) {
  TimeGrid grid(0.3, 1.7, 13);
  EXPECT_DOUBLE_EQ(grid.node(0), 0.3);
  EXPECT_DOUBLE_EQ(grid.node(13), 1.7);
  EXPECT_NEAR(grid.step() * 13.0, 1.4, 1e-15);
}

TEST(TimeGrid, RejectsDegenerateInput) {
  EXPECT_THROW(TimeGrid(1.0, 1.0, 4), ConfigError);
  EXPECT_THROW(TimeGrid(0.0, 1.0, 0), ConfigError);
}

TEST(TimeGrid, NodeLookup) {
  TimeGrid grid(0.0, 1.0, 16);
  EXPECT_EQ(grid.index_of_node(0.25), 4u);
  EXPECT_EQ(grid.index_of_node(1.0), 16u);
  EXPECT_THROW(grid.index_of_node(0.3), GridError);
  EXPECT_TRUE(grid.has_node(0.5));
  EXPECT_FALSE(grid.has_node(0.51));
}

TEST(TimeGrid, DyadicDetection) {
  EXPECT_TRUE(TimeGrid(0.0, 1.0, 8).is_dyadic());
  EXPECT_TRUE(TimeGrid(0.0, 1.0, 1).is_dyadic());
  EXPECT_FALSE(TimeGrid(0.0, 1.0, 12).is_dyadic());
}

TEST(CounterRng, Deterministic) {
  const double a = normal_draw(42, 0, 7, 3, 1, 0);
  const double b = normal_draw(42, 0, 7, 3, 1, 0);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, normal_draw(42, 0, 7, 3, 2, 0));
  EXPECT_NE(a, normal_draw(42, 1, 7, 3, 1, 0));
  EXPECT_NE(a, normal_draw(43, 0, 7, 3, 1, 0));
}

TEST(CounterRng, StandardNormalMoments) {
  const std::size_t n = 200000;
  std::vector<double> draws(n);
  for (std::size_t i = 0; i < n; ++i) {
    draws[i] = normal_draw(123, 0, i, 0, 0);
  }
  const auto est = mean_se(draws);
  EXPECT_NEAR(est.mean, 0.0, 5.0 * est.se);
  const double var = sample_variance(draws);
  // SE of the variance of n standard normals is sqrt(2/n).
  EXPECT_NEAR(var, 1.0, 5.0 * std::sqrt(2.0 / static_cast<double>(n)));
}

TEST(CounterRng, LanesUncorrelated) {
  const std::size_t n = 100000;
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = normal_draw(9, 0, i, 0, noise_lane(NoiseRole::kPrimary, 0));
    b[i] = normal_draw(9, 0, i, 0, noise_lane(NoiseRole::kPaired, 0));
  }
  const double corr = sample_correlation(a, b);
  EXPECT_NEAR(corr, 0.0, 5.0 / std::sqrt(static_cast<double>(n)));
}

TEST(CounterRng, UniformRange) {
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const double u = uniform_draw(5, 0, i, 0, 0);
    EXPECT_GT(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}
