#include <gtest/gtest.h>

#include <cstring>
#include <deque>
#include <random>

#include "oracles.hpp"
#include "whiten/pipeline.hpp"
#include "whiten/scenegen.hpp"

using namespace whiten;

namespace {

std::vector<WhitenedOutput> run(Pipeline& pipe, const std::vector<Frame>& frames) {
  std::vector<WhitenedOutput> out;
  for (const auto& f : frames)
    if (auto o = pipe.process_frame(f)) out.push_back(std::move(*o));
  return out;
}

bool bit_equal(const Frame& a, const Frame& b) {
  return a.data.size() == b.data.size() &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

double rms_valid(const WhitenedOutput& o) {
  double s = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < o.residual.height; ++y)
    for (int x = 0; x < o.residual.width; ++x)
      if (o.mask.at(x, y)) {
        s += o.residual.at(x, y) * o.residual.at(x, y);
        ++n;
      }
  return std::sqrt(s / n);
}

}  // namespace

TEST(Pipeline, ConstructionAndErrors) {
  const auto p = default_params();
  Pipeline pipe(p, 64, 64);
  EXPECT_EQ(pipe.bank().size(), 289u);
  EXPECT_EQ(pipe.frames_seen(), 0);
  EXPECT_EQ(pipe.backend(), SpectrumBackend::recursive);
  EXPECT_THROW(Pipeline(p, 4, 4), Error);
  EXPECT_THROW(pipe.process_frame(Frame(32, 32)), Error);
  auto bad = p;
  bad.alpha = 1.0;
  EXPECT_THROW(Pipeline(bad, 64, 64), Error);
  EXPECT_THROW(pipe.set_forced_velocity(GridIndex{20, 0}), Error);
}

TEST(Pipeline, IdenticalInitialStates) {
  const auto p = default_params();
  Pipeline a(p, 32, 32), b(p, 32, 32);
  for (std::size_t i = 0; i < a.bank().size(); ++i) {
    EXPECT_EQ(a.bank().kernels()[i].coeffs, b.bank().kernels()[i].coeffs);
  }
}

TEST(Pipeline, ValidRegion) {
  Pipeline pipe(default_params(), 64, 64);
  EXPECT_EQ(pipe.valid_x0(), 4);
  EXPECT_EQ(pipe.valid_x1(), 59);
  EXPECT_EQ(pipe.valid_y0(), 4);
  EXPECT_EQ(pipe.valid_y1(), 59);
}

TEST(Pipeline, WarmUpAndAlignment) {
  const auto p = default_params();
  for (int t_count : {5, 9}) {
    Pipeline pipe(p, 20, 20);
    const auto frames = oracle::random_frames(20, 20, t_count, 2);
    std::vector<std::int64_t> indices;
    for (int t = 0; t < t_count; ++t) {
      auto o = pipe.process_frame(frames[t]);
      EXPECT_EQ(o.has_value(), t >= 4);
      if (o) indices.push_back(o->frame_index);
    }
    ASSERT_EQ(static_cast<int>(indices.size()), t_count - 4);
    for (std::size_t i = 0; i < indices.size(); ++i) EXPECT_EQ(indices[i], static_cast<std::int64_t>(i) + 2);
  }
}

TEST(Pipeline, MaskCoversInterior) {
  const auto p = default_params();
  Pipeline pipe(p, 64, 64);
  const auto out = run(pipe, oracle::random_frames(64, 64, 5, 1));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].mask.count(), 56u * 56u);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      EXPECT_EQ(out[0].mask.at(x, y), x >= 4 && x <= 59 && y >= 4 && y <= 59);
}

TEST(Pipeline, ConstantSequenceIsRejected) {
  const auto p = default_params();
  Pipeline pipe(p, 32, 32);
  std::vector<Frame> frames;
  for (int t = 0; t < 8; ++t) frames.emplace_back(32, 32, t, 10.0f);
  for (const auto& o : run(pipe, frames))
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        if (o.mask.at(x, y)) EXPECT_LT(std::abs(o.residual.at(x, y)), 1e-3);
}

TEST(Pipeline, DelayedSampleAlignment) {
  // residual + prediction reproduces the delayed sample I(n - mhat).
  const auto p = default_params();
  Pipeline pipe(p, 20, 20);
  const auto frames = oracle::random_frames(20, 20, 6, 4);
  const auto out = run(pipe, frames);
  ASSERT_EQ(out.size(), 2u);
  for (const auto& o : out) {
    const Frame& src = frames[static_cast<std::size_t>(o.frame_index)];
    for (int y = 4; y <= 15; ++y)
      for (int x = 4; x <= 15; ++x) {
        EXPECT_NEAR(o.residual.at(x, y) + o.prediction.at(x, y), src.at(x, y), 1e-5);
      }
  }
}

TEST(Pipeline, ModelNullForOnGridCosine) {
  const auto p = default_params();
  oracle::CosineField field;
  field.terms.push_back({2.0 / 9.0, 1.0 / 9.0, 0.3, 1.0});
  field.vx = 0.75;
  field.vy = -0.5;
  Pipeline pipe(p, 40, 40);
  pipe.set_forced_velocity(*p.grid_index_of({0.75, -0.5}));
  std::vector<Frame> frames;
  for (int t = 0; t < 8; ++t) frames.push_back(field.frame(40, 40, t));
  const auto out = run(pipe, frames);
  ASSERT_FALSE(out.empty());
  for (const auto& o : out) EXPECT_LT(rms_valid(o), 0.01);
}

TEST(Pipeline, ModelNullForSeveralComponents) {
  const auto p = default_params();
  oracle::CosineField field;
  field.dc = 4.0;
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> bin(-3, 3);
  std::uniform_real_distribution<double> ph(0.0, 6.28);
  double amp_total = 0.0;
  for (int i = 0; i < 6; ++i) {
    field.terms.push_back({bin(rng) / 9.0, bin(rng) / 9.0, ph(rng), 0.25});
    amp_total += 0.25;
  }
  field.vx = -1.25;
  field.vy = 1.5;
  Pipeline pipe(p, 40, 40);
  pipe.set_forced_velocity(*p.grid_index_of({-1.25, 1.5}));
  std::vector<Frame> frames;
  for (int t = 0; t < 8; ++t) frames.push_back(field.frame(40, 40, t));
  for (const auto& o : run(pipe, frames)) EXPECT_LT(rms_valid(o), 0.01 * amp_total);
}

TEST(Pipeline, DcOffsetChangesNothing) {
  const auto p = default_params();
  const auto frames = oracle::random_frames(24, 24, 8, 31);
  auto shifted = frames;
  const float c = 50.0f;
  for (auto& f : shifted)
    for (auto& v : f.data) v += c;
  Pipeline a(p, 24, 24), b(p, 24, 24);
  const auto ra = run(a, frames);
  const auto rb = run(b, shifted);
  ASSERT_EQ(ra.size(), rb.size());
  for (std::size_t t = 0; t < ra.size(); ++t)
    for (int y = 0; y < 24; ++y)
      for (int x = 0; x < 24; ++x)
        if (ra[t].mask.at(x, y)) {
          EXPECT_LT(std::abs(ra[t].residual.at(x, y) - rb[t].residual.at(x, y)), 1e-3 * c);
        }
}

TEST(ApplyPef, ZeroSpectrum) {
  const auto p = default_params();
  std::vector<cfloat> bins(405);
  const auto bank = build_bank(p);
  const auto r = apply_pef(bins, bank.at({3, 9}), 7.5f, p);
  EXPECT_EQ(r.prediction, 0.0f);
  EXPECT_EQ(r.residual, 7.5f);
}

TEST(ApplyPef, MatchesDirectConvolution) {
  const auto p = default_params();
  const auto bank = build_bank(p);
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  std::uniform_int_distribution<int> g(0, 16);
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<double> w(405);
    double peak = 0.0;
    for (auto& v : w) {
      v = static_cast<float>(u(rng));
      peak = std::max(peak, std::abs(v));
    }
    std::vector<float> wf(w.begin(), w.end());
    auto s = naive_local_spectrum(wf, p);
    std::vector<cfloat> bins(s.begin(), s.end());
    const GridIndex gi{g(rng), g(rng)};
    const Velocity v = p.velocity_at(gi);
    const auto res = apply_pef(bins, bank.at(gi), 0.0f, p);
    std::vector<double> taps(405);
    for (int mz = 0; mz < 5; ++mz)
      for (int my = 0; my < 9; ++my)
        for (int mx = 0; mx < 9; ++mx)
          taps[p.sample_index(mx, my, mz)] = static_cast<double>(oracle::kernel_tap(p, v.x, v.y, mx, my, mz));
    const double direct = static_cast<double>(oracle::convolve(taps, w));
    EXPECT_LT(std::abs(res.prediction - direct), 1e-4 * peak);
    EXPECT_LT(std::abs(res.imag_residue), 1e-4 * std::abs(res.prediction) + 1e-6 * 405 * peak);
  }
}

TEST(Strategy, SerialAndParallelAreBitIdentical) {
  const auto p = default_params();
  const auto frames = generate(SimConfig{.frame_count = 50}).frames;
  Pipeline serial(p, 64, 64, Strategy::serial());
  Pipeline par(p, 64, 64, Strategy::parallel(8));
  Pipeline one(p, 64, 64, Strategy::parallel(1));
  for (const auto& f : frames) {
    auto a = serial.process_frame(f);
    auto b = par.process_frame(f);
    auto c = one.process_frame(f);
    ASSERT_EQ(a.has_value(), b.has_value());
    if (!a) continue;
    ASSERT_TRUE(bit_equal(a->residual, b->residual)) << f.index;
    ASSERT_TRUE(bit_equal(a->prediction, b->prediction)) << f.index;
    ASSERT_TRUE(bit_equal(a->residual, c->residual)) << f.index;
    for (std::size_t i = 0; i < a->velocity.index.size(); ++i) {
      ASSERT_EQ(a->velocity.index[i], b->velocity.index[i]);
    }
  }
}

TEST(Strategy, SwitchMidStream) {
  const auto p = default_params();
  const auto frames = oracle::random_frames(32, 32, 12, 8);
  Pipeline a(p, 32, 32), b(p, 32, 32);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (t == 6) b.set_strategy(Strategy::parallel(3));
    auto x = a.process_frame(frames[t]);
    auto y = b.process_frame(frames[t]);
    if (x) ASSERT_TRUE(bit_equal(x->residual, y->residual));
  }
  EXPECT_THROW(b.set_strategy(Strategy::parallel(0)), Error);
}

TEST(Backend, NaiveAndRecursiveAgree) {
  const auto p = default_params();
  const auto frames = oracle::random_frames(16, 16, 7, 19);
  Pipeline a(p, 16, 16, Strategy::serial(), SpectrumBackend::recursive);
  Pipeline b(p, 16, 16, Strategy::serial(), SpectrumBackend::naive);
  EXPECT_EQ(b.backend(), SpectrumBackend::naive);
  const auto ra = run(a, frames), rb = run(b, frames);
  ASSERT_EQ(ra.size(), rb.size());
  for (std::size_t t = 0; t < ra.size(); ++t)
    for (std::size_t i = 0; i < ra[t].prediction.data.size(); ++i)
      EXPECT_NEAR(ra[t].prediction.data[i], rb[t].prediction.data[i], 1e-4);
}
