#include <gtest/gtest.h>

#include <deque>
#include <random>

#include "oracles.hpp"
#include "whiten/flow.hpp"
#include "whiten/scenegen.hpp"

using namespace whiten;

namespace {

std::vector<cfloat> to_float(const std::vector<oracle::cd>& v) {
  std::vector<cfloat> out;
  for (const auto& c : v) out.emplace_back(static_cast<float>(c.real()), static_cast<float>(c.imag()));
  return out;
}

std::vector<double> random_window(const FilterParams& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(p.window_size());
  for (auto& v : w) v = u(rng);
  return w;
}

std::vector<float> power_of_random_window(const FilterParams& p, std::uint64_t seed) {
  auto s = to_float(oracle::dft(random_window(p, seed), p));
  std::vector<float> power(s.size());
  power_spectrum(s, power);
  return power;
}

}  // namespace

TEST(DcSuppression, Examples) {
  const auto p = default_params();
  auto constant = to_float(oracle::dft(std::vector<double>(405, 10.0), p));
  suppress_spatial_dc(constant, p);
  for (auto v : constant) EXPECT_LT(std::abs(v), 1e-4);

  std::vector<cfloat> single(405);
  single[p.bin_index(1, 0, 0)] = {2.0f, -1.0f};
  auto copy = single;
  suppress_spatial_dc(copy, p);
  EXPECT_EQ(copy, single);

  auto s = to_float(oracle::dft(random_window(p, 3), p));
  double before = 0.0, dc = 0.0, after = 0.0;
  for (auto v : s) before += std::norm(v);
  for (int kz = -2; kz <= 2; ++kz) dc += std::norm(s[p.bin_index(0, 0, kz)]);
  suppress_spatial_dc(s, p);
  for (auto v : s) after += std::norm(v);
  EXPECT_NEAR(after, before - dc, 1e-4 * before);
  for (int kz = -2; kz <= 2; ++kz) EXPECT_EQ(s[p.bin_index(0, 0, kz)], cfloat{});
  // Bins on the axes survive.
  EXPECT_NE(s[p.bin_index(0, 2, 0)], cfloat{});
  EXPECT_NE(s[p.bin_index(3, 0, 1)], cfloat{});
}

TEST(Hann, MatchesSampleDomainWindowing) {
  const auto p = default_params();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto w = random_window(p, seed);
    std::vector<double> windowed(w.size()), wx(w.size());
    for (int mz = 0; mz < 5; ++mz)
      for (int my = 0; my < 9; ++my)
        for (int mx = 0; mx < 9; ++mx) {
          const int i = p.sample_index(mx, my, mz);
          windowed[i] = w[i] * oracle::hann(mx, 9) * oracle::hann(my, 9) * oracle::hann(mz, 5);
          wx[i] = w[i] * oracle::hann(mx, 9);
        }
    const auto in = to_float(oracle::dft(w, p));
    const auto expect = to_float(oracle::dft(windowed, p));
    std::vector<cfloat> out(405), scratch(405);
    hann_condition(in, out, scratch, p);
    for (int i = 0; i < 405; ++i) EXPECT_LT(std::abs(out[i] - expect[i]), 1e-4);

    // x alone.
    const auto expect_x = to_float(oracle::dft(wx, p));
    std::vector<cfloat> only_x(405);
    detail::hann_axis(in, only_x, 9, 1, 45, 9, 1);
    for (int i = 0; i < 405; ++i) EXPECT_LT(std::abs(only_x[i] - expect_x[i]), 1e-4);
  }
}

TEST(Hann, SingleBinSpreadsToNeighbours) {
  const auto p = default_params();
  std::vector<cfloat> in(405), out(405), scratch(405);
  hann_condition(in, out, scratch, p);
  for (auto v : out) EXPECT_EQ(v, cfloat{});

  in[p.bin_index(4, 0, 0)] = 1.0f;  // kx = +4 wraps to -4
  hann_condition(in, out, scratch, p);
  const float taps[3] = {-0.25f, 0.5f, -0.25f};
  int nonzero = 0;
  for (int kz = -2; kz <= 2; ++kz)
    for (int ky = -4; ky <= 4; ++ky)
      for (int kx = -4; kx <= 4; ++kx) {
        const cfloat v = out[p.bin_index(kx, ky, kz)];
        if (v == cfloat{}) continue;
        ++nonzero;
        const int dx = kx == -4 ? 1 : kx - 4;  // circular offset from +4
        ASSERT_TRUE(dx >= -1 && dx <= 1);
        ASSERT_TRUE(ky >= -1 && ky <= 1 && kz >= -1 && kz <= 1);
        EXPECT_FLOAT_EQ(v.real(), taps[dx + 1] * taps[ky + 1] * taps[kz + 1]);
      }
  EXPECT_EQ(nonzero, 27);
}

TEST(Power, Examples) {
  std::vector<cfloat> s{{3.0f, 4.0f}, {0.0f, 0.0f}};
  std::vector<float> pw(2);
  power_spectrum(s, pw);
  EXPECT_FLOAT_EQ(pw[0], 25.0f);
  EXPECT_FLOAT_EQ(pw[1], 0.0f);

  const auto p = default_params();
  auto sp = to_float(oracle::dft(random_window(p, 5), p));
  std::vector<cfloat> cond(405), scratch(405);
  suppress_spatial_dc(sp, p);
  hann_condition(sp, cond, scratch, p);
  std::vector<float> power(405);
  power_spectrum(cond, power);
  float peak = *std::max_element(power.begin(), power.end());
  for (int kz = -2; kz <= 2; ++kz)
    for (int ky = -4; ky <= 4; ++ky)
      for (int kx = -4; kx <= 4; ++kx) {
        EXPECT_GE(power[p.bin_index(kx, ky, kz)], 0.0f);
        EXPECT_LT(std::abs(power[p.bin_index(kx, ky, kz)] - power[p.bin_index(-kx, -ky, -kz)]),
                  1e-4 * peak);
      }
}

TEST(Autocorr, MatchesDirectSum) {
  const auto p = default_params();
  for (std::uint64_t seed : {7u, 8u}) {
    const auto power = power_of_random_window(p, seed);
    double total = 0.0;
    for (float v : power) total += v;
    Autocorrelator ac(p);
    std::vector<float> r(289), imag(289);
    std::vector<cfloat> scratch(ac.scratch_size());
    ac.evaluate(power, r, scratch, imag);
    for (int ix = 0; ix < 17; ++ix)
      for (int iy = 0; iy < 17; ++iy) {
        long double im = 0;
        const long double ref = oracle::autocorr(power, p, p.lag_grid_x[ix], p.lag_grid_y[iy], &im);
        const int i = p.lag_index({ix, iy});
        EXPECT_NEAR(r[i], static_cast<double>(ref), 1e-5 * total);
        EXPECT_LE(std::abs(r[i]), total * (1 + 1e-6));
        EXPECT_LT(std::abs(imag[i]), 1e-4 * total);
        EXPECT_LT(std::abs(static_cast<double>(im)), 1e-4 * total);
      }
    EXPECT_EQ(autocorr(power, p), r);
  }
}

TEST(Autocorr, UniformPowerVanishesAtZeroLag) {
  const auto p = default_params();
  std::vector<float> power(405, 2.0f);
  const auto r = autocorr(power, p);
  const int zero = p.lag_index(*p.grid_index_of({0.0, 0.0}));
  EXPECT_NEAR(r[zero], 0.0, 1e-3);
  EXPECT_NEAR(static_cast<double>(oracle::autocorr(power, p, 0.0, 0.0)), 0.0, 1e-9);
}

TEST(Autocorr, WindowCompensationIsNormalised) {
  const auto p = default_params();
  const auto g = Autocorrelator::hann_autocorrelation(9, 4, p.lag_grid_x);
  EXPECT_DOUBLE_EQ(g[8], 1.0);
  for (int i = 0; i < 17; ++i) {
    EXPECT_NEAR(g[i], g[16 - i], 1e-12);
    EXPECT_GT(g[i], 0.0);
    if (i < 8) EXPECT_LT(g[i], g[i + 1]);
  }
}

TEST(Smooth, GeometricConvergence) {
  const double alpha = std::exp(-0.1);
  std::vector<float> r{3.0f, -1.0f, 0.5f};
  std::vector<float> rhat{0.0f, 0.0f, 0.0f};
  const std::vector<float> gap0{3.0f, -1.0f, 0.5f};
  for (int t = 1; t <= 20; ++t) {
    smooth(r, rhat, alpha, false);
    for (int i = 0; i < 3; ++i) {
      EXPECT_NEAR(std::abs(rhat[i] - r[i]), std::pow(alpha, t) * std::abs(gap0[i]), 1e-6);
    }
    if (t == 10) EXPECT_NEAR((r[0] - rhat[0]) / gap0[0], std::exp(-1.0), 1e-6);
  }
  std::vector<float> first{9.0f, 9.0f, 9.0f};
  smooth(r, first, alpha, true);
  EXPECT_EQ(first, r);
  std::vector<float> fast{0.0f, 0.0f, 0.0f};
  smooth(r, fast, 1e-9, false);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(fast[i], r[i], 1e-6);
}

TEST(PickVelocity, ArgmaxAndTies) {
  const auto p = default_params();
  std::vector<float> r(289, 0.0f);
  const GridIndex g = *p.grid_index_of({-0.75, -0.5});
  r[p.lag_index(g)] = 1.0f;
  EXPECT_EQ(pick_velocity(r, p), g);
  std::vector<float> flat(289, 1.0f);
  EXPECT_EQ(pick_velocity(flat, p), *p.grid_index_of({0.0, 0.0}));
  // Equal peaks at equal |v|: lexicographically first wins.
  std::vector<float> two(289, 0.0f);
  two[p.lag_index(*p.grid_index_of({1.0, 0.0}))] = 2.0f;
  two[p.lag_index(*p.grid_index_of({0.0, -1.0}))] = 2.0f;
  EXPECT_EQ(pick_velocity(two, p), *p.grid_index_of({0.0, -1.0}));
}

TEST(PickVelocity, InvariantUnderPowerScaling) {
  const auto p = default_params();
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    auto power = power_of_random_window(p, seed);
    const auto a = pick_velocity(autocorr(power, p), p);
    for (auto& v : power) v *= 37.5f;
    EXPECT_EQ(pick_velocity(autocorr(power, p), p), a);
  }
}

TEST(FlowEstimator, RecoversGridVelocityOfTranslatingTexture) {
  const auto p = default_params();
  SimConfig cfg;
  cfg.clutter_velocity = {1.0, 0.5};
  cfg.target_enabled = false;
  cfg.noise_sigma = 0.0;
  cfg.frame_count = 5 + 10;
  cfg.rng_seed = 3;
  const auto seq = generate(cfg);
  SpectrumStream s(p, 64, 64);
  FlowEstimator flow(p, 64, 64);
  Executor ex;
  const VelocityField* field = nullptr;
  for (const auto& f : seq.frames) {
    const auto& spec = s.push_frame(f, ex);
    if (spec.ready) field = &flow.update(spec, ex);
  }
  ASSERT_TRUE(field);
  std::size_t ok = 0, n = 0;
  for (int y = 8; y < 64; ++y)
    for (int x = 8; x < 64; ++x) {
      ++n;
      const Velocity v = field->at(x, y);
      if (v.x == 1.0 && v.y == 0.5) ++ok;
    }
  EXPECT_GE(static_cast<double>(ok) / n, 0.95) << ok << "/" << n;
}
