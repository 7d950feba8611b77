#pragma once

// Synthetic cluttered sequences: a rigidly translating sum of cosines on a
// DC pedestal, an occluding Gaussian point target and additive white noise.
//
// Draw order from the seeded generator is fixed: for each component fx, fy,
// phase; then per frame, per pixel in row-major order, one normal deviate.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "whiten/core.hpp"

namespace whiten {

struct SimConfig {
  int width = 64;
  int height = 64;
  int frame_count = 100;
  Velocity clutter_velocity{1.625, 0.625};
  int component_count = 25;
  double component_amplitude = 0.1;
  double freq_min = -2.0 / 9.0;
  double freq_max = 2.0 / 9.0;
  double dc_offset = 10.0;
  bool target_enabled = true;
  Velocity target_velocity{-0.625, -0.375};
  double target_peak = 1.0;
  double psf_sigma = 1.0;
  double target_truncation = 0.1;
  double noise_sigma = 0.1;
  std::uint64_t rng_seed = 1;
};

struct ClutterComponent {
  double fx = 0.0;
  double fy = 0.0;
  double phase = 0.0;
  double amplitude = 0.0;
};

struct GroundTruth {
  std::vector<Velocity> target_centers;  // one per frame
  bool target_enabled = true;
  Velocity clutter_velocity;
  std::vector<ClutterComponent> components;
  std::uint64_t seed = 0;
};

struct Sequence {
  std::vector<Frame> frames;
  GroundTruth truth;
};

inline void validate(const SimConfig& c, int min_frames = 1) {
  if (c.width < 1 || c.height < 1) throw Error("simulation: image size must be positive");
  if (c.frame_count < min_frames) {
    throw Error("simulation: frame_count must be at least " + std::to_string(min_frames));
  }
  if (c.component_count < 0) throw Error("simulation: component_count must be >= 0");
  if (c.freq_max < c.freq_min) throw Error("simulation: empty frequency range");
  if (c.noise_sigma < 0.0) throw Error("simulation: noise_sigma must be >= 0");
  if (c.target_enabled) {
    if (!(c.psf_sigma > 0.0)) throw Error("simulation: psf_sigma must be > 0");
    if (!(c.target_peak > c.target_truncation)) {
      throw Error("simulation: target peak must exceed the truncation level");
    }
  }
}

/// Pixels where peak * exp(-r^2 / 2 sigma^2) >= truncation are replaced by
/// the target profile; others keep the background.
inline void inject_target(Frame& frame, Velocity center, double peak, double sigma,
                          double truncation) {
  if (!(peak > truncation)) throw Error("inject_target: peak must exceed truncation");
  const double radius = sigma * std::sqrt(2.0 * std::log(peak / truncation));
  const int x0 = std::max(0, static_cast<int>(std::floor(center.x - radius)));
  const int x1 = std::min(frame.width - 1, static_cast<int>(std::ceil(center.x + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(center.y - radius)));
  const int y1 = std::min(frame.height - 1, static_cast<int>(std::ceil(center.y + radius)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - center.x, dy = y - center.y;
      const double t = peak * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      if (t >= truncation) frame.at(x, y) = static_cast<float>(t);
    }
}

inline void add_noise(Frame& frame, double sigma, std::mt19937_64& rng) {
  if (sigma < 0.0) throw Error("add_noise: sigma must be >= 0");
  if (sigma == 0.0) return;
  std::normal_distribution<double> dist(0.0, sigma);
  for (float& v : frame.data) v = static_cast<float>(v + dist(rng));
}

/// Background intensity at continuous position (x, y) and time t.
inline double clutter_at(const GroundTruth& truth, double dc, double x, double y, double t) {
  double v = dc;
  const double sx = x - truth.clutter_velocity.x * t;
  const double sy = y - truth.clutter_velocity.y * t;
  for (const auto& c : truth.components) {
    v += c.amplitude * std::cos(2.0 * kPi * (c.fx * sx + c.fy * sy) + c.phase);
  }
  return v;
}

inline Sequence generate(const SimConfig& cfg) {
  validate(cfg);
  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_real_distribution<double> freq(cfg.freq_min, cfg.freq_max);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);

  Sequence seq;
  GroundTruth& truth = seq.truth;
  truth.seed = cfg.rng_seed;
  truth.clutter_velocity = cfg.clutter_velocity;
  truth.target_enabled = cfg.target_enabled;
  for (int i = 0; i < cfg.component_count; ++i) {
    ClutterComponent c;
    c.fx = freq(rng);
    c.fy = freq(rng);
    c.phase = phase(rng);
    c.amplitude = cfg.component_amplitude;
    truth.components.push_back(c);
  }

  const double last = cfg.frame_count - 1;
  for (int t = 0; t < cfg.frame_count; ++t) {
    truth.target_centers.push_back({cfg.width / 2.0 + cfg.target_velocity.x * (t - last),
                                    cfg.height / 2.0 + cfg.target_velocity.y * (t - last)});
  }

  seq.frames.reserve(cfg.frame_count);
  for (int t = 0; t < cfg.frame_count; ++t) {
    Frame f(cfg.width, cfg.height, t);
    for (int y = 0; y < cfg.height; ++y)
      for (int x = 0; x < cfg.width; ++x)
        f.at(x, y) = static_cast<float>(clutter_at(truth, cfg.dc_offset, x, y, t));
    if (cfg.target_enabled) {
      inject_target(f, truth.target_centers[t], cfg.target_peak, cfg.psf_sigma,
                    cfg.target_truncation);
    }
    add_noise(f, cfg.noise_sigma, rng);
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

/// Radius of the replaced disk.
inline double target_radius(const SimConfig& c) {
  return c.psf_sigma * std::sqrt(2.0 * std::log(c.target_peak / c.target_truncation));
}

}  // namespace whiten
