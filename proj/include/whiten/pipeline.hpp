#pragma once

// Frame-by-frame whitening: spectrum, velocity, predictor selection and
// residual. An output for input frame n_z is aligned to frame n_z - mhat_z
// and to pixel n - mhat.

#include <chrono>
#include <deque>
#include <memory>
#include <optional>
#include <span>

#include "whiten/core.hpp"
#include "whiten/filterdesign.hpp"
#include "whiten/flow.hpp"
#include "whiten/parallel.hpp"
#include "whiten/spectrum.hpp"

namespace whiten {

struct PefResult {
  float prediction = 0.0f;
  float residual = 0.0f;
  float imag_residue = 0.0f;
};

/// Inner product of the retained bins of one pixel's spectrum with a
/// frequency-domain predictor; the real part is the background estimate.
inline PefResult apply_pef(std::span<const cfloat> bins, const FreqKernel& kernel, float delayed,
                           const FilterParams& p) {
  cfloat acc{};
  const int wx = p.wx();
  for (int bz = -p.kz; bz <= p.kz; ++bz)
    for (int by = -p.by; by <= p.by; ++by) {
      const cfloat* s = bins.data() + p.bin_index(-p.bx, by, bz);
      const cfloat* h = kernel.coeffs.data() + p.retained_index(-p.bx, by, bz);
      for (int i = 0; i < wx; ++i) acc += h[i] * s[i];
    }
  return {acc.real(), delayed - acc.real(), acc.imag()};
}

struct WhitenedOutput {
  std::int64_t frame_index = 0;
  Frame residual;
  Frame prediction;
  VelocityField velocity;
  ValidityMask mask;
};

/// Wall-clock seconds spent in each stage of the last processed frame.
struct StageTimings {
  double spectrum = 0.0;
  double conditioning = 0.0;
  double autocorr = 0.0;
  double filtering = 0.0;
  double total() const { return spectrum + conditioning + autocorr + filtering; }
};

enum class SpectrumBackend { recursive, naive };

class Pipeline {
 public:
  Pipeline(const FilterParams& p, int width, int height, Strategy strategy = Strategy::serial(),
           SpectrumBackend backend = SpectrumBackend::recursive)
      : params_((require_valid(p), p)), width_(width), height_(height), backend_(backend),
        executor_(std::make_unique<Executor>(strategy)) {
    if (width < p.mx() || height < p.my()) throw Error("image smaller than analysis window");
    if (backend == SpectrumBackend::recursive) {
      recursive_.emplace(p, width, height);
    } else {
      naive_.emplace(p, width, height);
    }
    flow_.emplace(p, width, height);
    bank_ = FilterBank::build(p, *executor_);
  }

  void set_strategy(Strategy s) { executor_ = std::make_unique<Executor>(s); }
  const Strategy& strategy() const { return executor_->strategy(); }

  /// Uses the given grid velocity at every pixel instead of the estimate.
  void set_forced_velocity(std::optional<GridIndex> g) {
    if (g) bank_.at(*g);
    forced_ = g;
  }

  const FilterParams& params() const { return params_; }
  SpectrumBackend backend() const { return backend_; }
  const FilterBank& bank() const { return bank_; }
  const FlowEstimator& flow() const { return *flow_; }
  const StageTimings& last_timings() const { return timings_; }
  std::int64_t frames_seen() const { return frames_seen_; }
  int width() const { return width_; }
  int height() const { return height_; }

  const SpectrumField& last_spectrum() const {
    return recursive_ ? recursive_->field() : naive_->field();
  }

  /// Output region in output-pixel coordinates (inclusive bounds).
  int valid_x0() const { return params_.mx() - 1 - params_.mhat[0]; }
  int valid_x1() const { return width_ - 1 - params_.mhat[0]; }
  int valid_y0() const { return params_.my() - 1 - params_.mhat[1]; }
  int valid_y1() const { return height_ - 1 - params_.mhat[1]; }

  std::optional<WhitenedOutput> process_frame(const Frame& frame) {
    using clock = std::chrono::steady_clock;
    auto seconds = [](clock::time_point a, clock::time_point b) {
      return std::chrono::duration<double>(b - a).count();
    };
    check_frame(frame, width_, height_);
    timings_ = {};
    delay_.push_back(frame);
    if (static_cast<int>(delay_.size()) > params_.mhat[2] + 1) delay_.pop_front();
    ++frames_seen_;

    const auto t0 = clock::now();
    const SpectrumField& spectrum = recursive_ ? recursive_->push_frame(frame, *executor_)
                                               : naive_->push_frame(frame, *executor_);
    const auto t1 = clock::now();
    timings_.spectrum = seconds(t0, t1);
    if (!spectrum.ready) return std::nullopt;

    flow_->condition(spectrum, *executor_);
    const auto t2 = clock::now();
    const VelocityField& anchor_velocity = flow_->correlate(*executor_);
    const auto t3 = clock::now();
    timings_.conditioning = seconds(t1, t2);
    timings_.autocorr = seconds(t2, t3);

    const Frame& delayed = delay_.front();
    WhitenedOutput out;
    out.frame_index = frame.index - params_.mhat[2];
    out.residual = Frame(width_, height_, out.frame_index);
    out.prediction = Frame(width_, height_, out.frame_index);
    out.velocity = VelocityField(width_, height_);
    out.mask = ValidityMask(width_, height_);

    const int mx = params_.mx(), my = params_.my();
    const auto& mhat = params_.mhat;
    executor_->for_each(static_cast<std::size_t>(height_ - my + 1), [&](std::size_t r) {
      const int y = static_cast<int>(r) + my - 1;
      const int oy = y - mhat[1];
      for (int x = mx - 1; x < width_; ++x) {
        const int ox = x - mhat[0];
        const GridIndex g = forced_ ? *forced_ : anchor_velocity.index_at(x, y);
        const PefResult res = apply_pef(spectrum.at(x, y), bank_.at(g), delayed.at(ox, oy), params_);
        out.prediction.at(ox, oy) = res.prediction;
        out.residual.at(ox, oy) = res.residual;
        out.velocity.set(ox, oy, g, params_.velocity_at(g));
        out.mask.set(ox, oy, true);
      }
    });
    timings_.filtering = seconds(t3, clock::now());
    return out;
  }

 private:
  FilterParams params_;
  int width_;
  int height_;
  SpectrumBackend backend_;
  std::unique_ptr<Executor> executor_;
  std::optional<SpectrumStream> recursive_;
  std::optional<NaiveSpectrum> naive_;
  std::optional<FlowEstimator> flow_;
  FilterBank bank_;
  std::optional<GridIndex> forced_;
  std::deque<Frame> delay_;
  std::int64_t frames_seen_ = 0;
  StageTimings timings_;
};

}  // namespace whiten
