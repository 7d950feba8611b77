#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "whiten/core.hpp"

using namespace whiten;

TEST(Params, DefaultSizes) {
  const auto p = default_params();
  EXPECT_EQ(p.mx(), 9);
  EXPECT_EQ(p.my(), 9);
  EXPECT_EQ(p.mz(), 5);
  EXPECT_EQ(p.wx(), 7);
  EXPECT_EQ(p.wy(), 7);
  EXPECT_EQ(p.delta_x(), 4);
  EXPECT_EQ(p.delta_y(), 4);
  EXPECT_EQ(p.delta_z(), 2);
  EXPECT_EQ(p.bins_per_pixel(), 405);
  EXPECT_EQ(p.retained_bins(), 245);
  EXPECT_EQ(p.lag_count(), 289);
  EXPECT_EQ(p.mhat, (std::array<int, 3>{4, 4, 2}));
}

TEST(Params, DefaultAlpha) {
  EXPECT_NEAR(default_params().alpha, 0.904837, 1e-6);
  EXPECT_DOUBLE_EQ(default_params().alpha, std::exp(-0.1));
}

TEST(Params, DefaultLagGrid) {
  const auto p = default_params();
  ASSERT_EQ(p.lag_grid_x.size(), 17u);
  EXPECT_DOUBLE_EQ(p.lag_grid_x.front(), -2.0);
  EXPECT_DOUBLE_EQ(p.lag_grid_x.back(), 2.0);
  for (std::size_t i = 1; i < 17; ++i) EXPECT_DOUBLE_EQ(p.lag_grid_x[i] - p.lag_grid_x[i - 1], 0.25);
  EXPECT_EQ(p.lag_grid_x, p.lag_grid_y);
}

TEST(Params, DerivedSizesFollowHalfWidths) {
  for (int k = 1; k <= 6; ++k)
    for (int b = 0; b < k; ++b) {
      FilterParams p = default_params();
      p.kx = p.ky = k;
      p.bx = p.by = b;
      EXPECT_EQ(p.mx(), 2 * k + 1);
      EXPECT_EQ(p.wx(), 2 * b + 1);
      EXPECT_EQ(p.delta_x(), (p.mx() - 1) / 2);
    }
}

TEST(Validate, DefaultsAreValid) { EXPECT_FALSE(validate(default_params()).has_value()); }

TEST(Validate, BandwidthRule) {
  auto p = default_params();
  p.bx = 4;
  auto err = validate(p);
  ASSERT_TRUE(err);
  EXPECT_NE(err->find("bandwidth must satisfy B < K"), std::string::npos);
}

TEST(Validate, AlphaRule) {
  for (double a : {1.0, 0.0, -0.5, 2.0}) {
    auto p = default_params();
    p.alpha = a;
    auto err = validate(p);
    ASSERT_TRUE(err) << a;
    EXPECT_NE(err->find("smoothing pole must be in (0,1)"), std::string::npos);
  }
}

TEST(Validate, OtherRules) {
  auto p = default_params();
  p.mhat[2] = 5;
  EXPECT_TRUE(validate(p));
  p = default_params();
  p.mhat[0] = -1;
  EXPECT_TRUE(validate(p));
  p = default_params();
  p.lag_grid_x = {0.0, 0.0};
  EXPECT_TRUE(validate(p));
  p = default_params();
  p.lag_grid_y = {};
  EXPECT_TRUE(validate(p));
  p = default_params();
  p.lag_grid_x = {-5.0, 0.0};
  EXPECT_TRUE(validate(p));
  EXPECT_THROW(require_valid(p), Error);
}

TEST(Indices, BinIndexIsBijective) {
  const auto p = default_params();
  std::set<int> seen;
  for (int z = -p.kz; z <= p.kz; ++z)
    for (int y = -p.ky; y <= p.ky; ++y)
      for (int x = -p.kx; x <= p.kx; ++x) seen.insert(p.bin_index(x, y, z));
  EXPECT_EQ(seen.size(), 405u);
  EXPECT_EQ(*seen.begin(), 0);
  EXPECT_EQ(*seen.rbegin(), 404);
  EXPECT_EQ(p.bin_index(-4, -4, -2), 0);
  EXPECT_EQ(p.bin_index(-3, -4, -2), 1);  // kx innermost
}

TEST(Indices, RetainedAndLag) {
  const auto p = default_params();
  std::set<int> seen;
  for (int z = -p.kz; z <= p.kz; ++z)
    for (int y = -p.by; y <= p.by; ++y)
      for (int x = -p.bx; x <= p.bx; ++x) seen.insert(p.retained_index(x, y, z));
  EXPECT_EQ(seen.size(), 245u);
  EXPECT_EQ(*seen.rbegin(), 244);
  const GridIndex g{3, 5};
  EXPECT_EQ(p.lag_index(g), 3 * 17 + 5);
  EXPECT_DOUBLE_EQ(p.velocity_at(g).x, -1.25);
  EXPECT_DOUBLE_EQ(p.velocity_at(g).y, -0.75);
  EXPECT_EQ(p.grid_index_of({-1.25, -0.75}), g);
  EXPECT_FALSE(p.grid_index_of({1.625, 0.5}).has_value());
}

TEST(ParamFile, ParsesAndRejects) {
  const auto p = parse_params("# comment\nkx = 5\nbx=2 # trailing\nalpha = 0.5\nlag_grid = -1:0.5:1\n");
  EXPECT_EQ(p.kx, 5);
  EXPECT_EQ(p.bx, 2);
  EXPECT_DOUBLE_EQ(p.alpha, 0.5);
  EXPECT_EQ(p.lag_grid_x, (std::vector<double>{-1.0, -0.5, 0.0, 0.5, 1.0}));
  EXPECT_EQ(p.lag_grid_x, p.lag_grid_y);

  const auto q = parse_params("lag_grid_y = -1, 0, 2\n");
  EXPECT_EQ(q.lag_grid_y, (std::vector<double>{-1.0, 0.0, 2.0}));
  EXPECT_EQ(q.lag_grid_x.size(), 17u);

  EXPECT_THROW(parse_params("nonsense = 3\n"), Error);
  EXPECT_THROW(parse_params("kx 3\n"), Error);
  EXPECT_THROW(parse_params("kx = 3.5\n"), Error);
  EXPECT_THROW(parse_params("alpha = abc\n"), Error);
}

TEST(ParamFile, FormatRoundTrips) {
  auto p = default_params();
  p.kx = 5;
  p.lag_grid_y = {-1.0, 0.0, 1.0};
  const auto q = parse_params(format_params(p));
  EXPECT_EQ(q.kx, p.kx);
  EXPECT_EQ(q.alpha, p.alpha);
  EXPECT_EQ(q.lag_grid_x, p.lag_grid_x);
  EXPECT_EQ(q.lag_grid_y, p.lag_grid_y);
}

TEST(Frames, MaskAndCheck) {
  Frame f(4, 3, 7, 2.0f);
  EXPECT_EQ(f.size(), 12u);
  f.at(3, 2) = 5.0f;
  EXPECT_FLOAT_EQ(f.data.back(), 5.0f);
  EXPECT_NO_THROW(check_frame(f, 4, 3));
  EXPECT_THROW(check_frame(f, 3, 4), Error);
  ValidityMask m(4, 3);
  EXPECT_EQ(m.count(), 0u);
  m.set(1, 1, true);
  EXPECT_TRUE(m.at(1, 1));
  EXPECT_EQ(m.count(), 1u);
}
