#include "cmetric/collocation.hpp"

#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

namespace cmetric {
namespace {

TEST(CollocationTest, HexagonalUnitBox) {
  const CollocationSet set = hexagonal_grid(make_box({0, 0}, {1, 1}), 0.6);
  ASSERT_EQ(set.size(), 4u);
  const double y = 0.6 * std::sqrt(3.0) / 2.0;
  const std::vector<std::pair<double, double>> want{{0, 0}, {0.6, 0}, {0.3, y}, {0.9, y}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(set.points[i][0], want[i].first, 1e-15);
    EXPECT_NEAR(set.points[i][1], want[i].second, 1e-15);
  }
}

TEST(CollocationTest, SpeedControlStrip) {
  const auto pred = halfspace_predicate({{make_vec({0, -1}), 0.18},
                                         {make_vec({0, 1}), 0.85},
                                         {make_vec({-2.11, -1}), 0.3},
                                         {make_vec({1.79, 1}), 0.54}});
  const CollocationSet set = hexagonal_grid(make_box({-1, -0.18}, {1, 0.85}), 0.03, pred);
  EXPECT_EQ(set.size(), 547u);
  for (const auto& p : set.points) EXPECT_TRUE(set.admits(p));
  EXPECT_GT(min_pairwise_distance(set.points), 0.0);
}

TEST(CollocationTest, EmptyRegionIsConfigError) {
  EXPECT_THROW(hexagonal_grid(make_box({0, 0}, {1, 1}), 0.1, [](const Vec&) { return false; }),
               ConfigError);
  EXPECT_THROW(rectangular_grid(make_box({0, 0}, {1, 1}), 0.1, [](const Vec&) { return false; }),
               ConfigError);
}

TEST(CollocationTest, HexagonalNeedsPlane) {
  EXPECT_THROW(hexagonal_grid(make_box({0, 0, 0}, {1, 1, 1}), 0.5), UnsupportedError);
}

TEST(CollocationTest, Rectangular) {
  const CollocationSet a = rectangular_grid(make_box({0}, {1}), 0.5);
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a.points[0][0], 0.0);
  EXPECT_EQ(a.points[1][0], 0.5);
  EXPECT_EQ(a.points[2][0], 1.0);
  EXPECT_EQ(rectangular_grid(make_box({0, 0}, {1, 1}), 1.0).size(), 4u);
  EXPECT_THROW(rectangular_grid(make_box({0}, {1}), -0.5), InputError);
  EXPECT_THROW(hexagonal_grid(make_box({0, 0}, {1, 1}), 0.0), InputError);
}

TEST(CollocationTest, FillDistance) {
  CollocationSet one;
  one.points = {make_vec({0.5})};
  one.domain = make_box({0}, {1});
  EXPECT_DOUBLE_EQ(fill_distance(one, 101), 0.5);

  const double alpha = 0.2;
  const CollocationSet grid = rectangular_grid(make_box({0, 0}, {1, 1}), alpha);
  const int probes = 101;
  EXPECT_LE(fill_distance(grid, probes), alpha * std::sqrt(2.0) / 2 + probe_resolution(grid, probes));

  CollocationSet more = one;
  more.points.push_back(make_vec({0.1}));
  EXPECT_LE(fill_distance(more, 101), fill_distance(one, 101));
  EXPECT_THROW(fill_distance(one, 1), InputError);
}

TEST(CollocationTest, FillDistanceThreadInvariant) {
  const CollocationSet grid = hexagonal_grid(make_box({-1, -1}, {1, 1}), 0.3);
  EXPECT_EQ(fill_distance(grid, 80, 1), fill_distance(grid, 80, 3));
}

TEST(CollocationTest, Polygon) {
  const Polygon sq({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  EXPECT_TRUE(sq.contains(0.5, 0.5));
  EXPECT_FALSE(sq.contains(1.5, 0.5));
  EXPECT_THROW(Polygon({{0, 0}, {1, 0}}), InputError);
  const Polygon orbit = Polygon::from_csv(std::string(CMETRIC_SOURCE_DIR) + "/data/vanderpol_orbit.csv");
  EXPECT_TRUE(orbit.contains(0, 0));
  EXPECT_FALSE(orbit.contains(2.5, 0));
  const Box b = orbit.bounding_box();
  EXPECT_NEAR(b.hi[0], 2.0233, 1e-3);
  EXPECT_NEAR(b.hi[1], 5.0643, 1e-3);
}

TEST(CollocationTest, PointsCsvRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "cmetric_points_test.csv";
  const CollocationSet set = hexagonal_grid(make_box({-1, -1}, {1, 1}), 0.37);
  write_points_csv(path.string(), set.points);
  const auto back = read_points_csv(path.string());
  ASSERT_EQ(back.size(), set.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i], set.points[i]);
  std::filesystem::remove(path);
  EXPECT_THROW(read_points_csv("/nonexistent/points.csv"), InputError);
}

}  // namespace
}  // namespace cmetric
