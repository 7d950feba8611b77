#pragma once

// Local 3-D spectrum at every pixel.
//
// The analysis window behind anchor pixel n is indexed backward: sample m
// is I(n - m), m in [0, M-1] per dimension. Bin k of that window is
//
//   S(k; n) = sum_m F(m; k) I(n - m),
//   F(m; k) = exp(+j 2 pi (kx mx / Mx + ky my / My + kz mz / Mz)) / sqrt(Mx My Mz).
//
// Two engines produce identical fields (up to rounding): NaiveSpectrum sums
// every window directly, SpectrumStream slides 1-D DFTs along rows and
// columns and finishes with a short temporal DFT over a frame ring buffer.

#include <cmath>
#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include "whiten/core.hpp"
#include "whiten/parallel.hpp"

namespace whiten {

inline cdouble basis(std::array<int, 3> m, std::array<int, 3> k, const FilterParams& p) {
  const double phase = 2.0 * kPi *
                       (static_cast<double>(k[0]) * m[0] / p.mx() +
                        static_cast<double>(k[1]) * m[1] / p.my() +
                        static_cast<double>(k[2]) * m[2] / p.mz());
  return std::polar(1.0 / std::sqrt(static_cast<double>(p.window_size())), phase);
}

/// Per-pixel bins for one frame time. Pixels outside the valid region (and
/// every pixel before warm-up) hold zeros.
struct SpectrumField {
  int width = 0;
  int height = 0;
  int bins = 0;
  int first_x = 0;  // Mx - 1
  int first_y = 0;  // My - 1
  std::int64_t frame_index = 0;
  bool ready = false;
  std::vector<cfloat> data;

  SpectrumField() = default;
  SpectrumField(const FilterParams& p, int w, int h)
      : width(w), height(h), bins(p.bins_per_pixel()), first_x(p.mx() - 1),
        first_y(p.my() - 1), data(static_cast<std::size_t>(w) * h * bins) {}

  bool valid(int x, int y) const {
    return ready && x >= first_x && y >= first_y && x < width && y < height;
  }
  std::span<cfloat> at(int x, int y) {
    return {data.data() + (static_cast<std::size_t>(y) * width + x) * bins,
            static_cast<std::size_t>(bins)};
  }
  std::span<const cfloat> at(int x, int y) const {
    return {data.data() + (static_cast<std::size_t>(y) * width + x) * bins,
            static_cast<std::size_t>(bins)};
  }
};

/// Direct evaluation for one window; `window` is in sample_index order.
inline std::vector<cdouble> naive_local_spectrum(std::span<const float> window,
                                                 const FilterParams& p) {
  if (window.size() != static_cast<std::size_t>(p.window_size())) {
    throw Error("naive_local_spectrum: window has wrong size");
  }
  std::vector<cdouble> out(p.bins_per_pixel());
  for (int bz = -p.kz; bz <= p.kz; ++bz)
    for (int by = -p.ky; by <= p.ky; ++by)
      for (int bx = -p.kx; bx <= p.kx; ++bx) {
        cdouble acc{};
        for (int mz = 0; mz < p.mz(); ++mz)
          for (int my = 0; my < p.my(); ++my)
            for (int mx = 0; mx < p.mx(); ++mx) {
              acc += basis({mx, my, mz}, {bx, by, bz}, p) *
                     static_cast<double>(window[p.sample_index(mx, my, mz)]);
            }
        out[p.bin_index(bx, by, bz)] = acc;
      }
  return out;
}

/// Backward-indexed window ending at (x, y) of the newest frame in `frames`
/// (frames[0] oldest). Requires x >= Mx-1, y >= My-1 and Mz frames.
inline void gather_window(const std::deque<Frame>& frames, int x, int y, const FilterParams& p,
                          std::span<float> out) {
  const int newest = static_cast<int>(frames.size()) - 1;
  for (int mz = 0; mz < p.mz(); ++mz) {
    const Frame& f = frames[newest - mz];
    for (int my = 0; my < p.my(); ++my)
      for (int mx = 0; mx < p.mx(); ++mx) out[p.sample_index(mx, my, mz)] = f.at(x - mx, y - my);
  }
}

/// Non-recursive engine: every pixel's spectrum is computed independently
/// from its raw window with a precomputed basis matrix.
class NaiveSpectrum {
 public:
  NaiveSpectrum(const FilterParams& p, int width, int height)
      : params_(p), width_(width), height_(height), field_(p, width, height) {
    require_valid(p);
    if (width < p.mx() || height < p.my()) throw Error("image smaller than analysis window");
    const int n = p.window_size();
    table_.resize(static_cast<std::size_t>(n) * n);
    for (int bz = -p.kz; bz <= p.kz; ++bz)
      for (int by = -p.ky; by <= p.ky; ++by)
        for (int bx = -p.kx; bx <= p.kx; ++bx)
          for (int mz = 0; mz < p.mz(); ++mz)
            for (int my = 0; my < p.my(); ++my)
              for (int mx = 0; mx < p.mx(); ++mx)
                table_[static_cast<std::size_t>(p.bin_index(bx, by, bz)) * n +
                       p.sample_index(mx, my, mz)] = basis({mx, my, mz}, {bx, by, bz}, p);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::int64_t frames_seen() const { return frames_seen_; }
  bool ready() const { return frames_seen_ >= params_.mz(); }

  const SpectrumField& push_frame(const Frame& frame, Executor& exec) {
    check_frame(frame, width_, height_);
    history_.push_back(frame);
    if (static_cast<int>(history_.size()) > params_.mz()) history_.pop_front();
    ++frames_seen_;
    field_.frame_index = frame.index;
    field_.ready = ready();
    if (!field_.ready) return field_;

    const int n = params_.window_size();
    exec.for_each(static_cast<std::size_t>(height_ - params_.my() + 1), [&](std::size_t r) {
      const int y = static_cast<int>(r) + params_.my() - 1;
      std::vector<float> window(n);
      for (int x = params_.mx() - 1; x < width_; ++x) {
        gather_window(history_, x, y, params_, window);
        auto out = field_.at(x, y);
        for (int b = 0; b < n; ++b) {
          const cdouble* row = table_.data() + static_cast<std::size_t>(b) * n;
          double re = 0.0, im = 0.0;
          for (int s = 0; s < n; ++s) {
            re += row[s].real() * window[s];
            im += row[s].imag() * window[s];
          }
          out[b] = cfloat(static_cast<float>(re), static_cast<float>(im));
        }
      }
    });
    return field_;
  }

  const SpectrumField& field() const { return field_; }

 private:
  FilterParams params_;
  int width_;
  int height_;
  std::int64_t frames_seen_ = 0;
  std::deque<Frame> history_;
  std::vector<cdouble> table_;
  SpectrumField field_;
};

/// Recursive engine.
///
/// Stage 1 slides an Mx-point DFT along each row, stage 2 slides an
/// My-point DFT down each column of the stage-1 output, and stage 3 takes
/// the Mz-point temporal DFT over the last Mz spatial spectra. The sliding
/// update for one bin is X(n+1) = e^{j2pi k/M} X(n) + I(n+1) - I(n+1-M); it
/// restarts from zero at the start of every row and column.
class SpectrumStream {
 public:
  SpectrumStream(const FilterParams& p, int width, int height)
      : params_(p), width_(width), height_(height), field_(p, width, height) {
    require_valid(p);
    if (width < p.mx() || height < p.my()) throw Error("image smaller than analysis window");
    const int mx = p.mx(), my = p.my(), mz = p.mz();
    for (int b = -p.kx; b <= p.kx; ++b)
      twiddle_x_.push_back(cfloat(std::polar(1.0, 2.0 * kPi * b / mx)));
    for (int b = -p.ky; b <= p.ky; ++b)
      twiddle_y_.push_back(cfloat(std::polar(1.0, 2.0 * kPi * b / my)));
    const double norm = 1.0 / std::sqrt(static_cast<double>(p.window_size()));
    for (int b = -p.kz; b <= p.kz; ++b)
      for (int m = 0; m < mz; ++m)
        temporal_.push_back(cfloat(std::polar(norm, 2.0 * kPi * b * m / mz)));
    const std::size_t pixels = static_cast<std::size_t>(width) * height;
    row_stage_.assign(pixels * mx, cfloat{});
    ring_.assign(mz, std::vector<cfloat>(pixels * p.spatial_bins()));
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::int64_t frames_seen() const { return frames_seen_; }
  bool ready() const { return frames_seen_ >= params_.mz(); }
  /// Number of spatial spectra currently held for the temporal stage.
  int buffered() const {
    return static_cast<int>(std::min<std::int64_t>(frames_seen_, params_.mz()));
  }

  const SpectrumField& push_frame(const Frame& frame, Executor& exec) {
    check_frame(frame, width_, height_);
    const int mx = params_.mx(), my = params_.my(), mz = params_.mz();
    const int sb = params_.spatial_bins();
    std::vector<cfloat>& slot = ring_[frames_seen_ % mz];

    // Stage 1: rows.
    exec.for_each(static_cast<std::size_t>(height_), [&](std::size_t r) {
      const int y = static_cast<int>(r);
      const float* line = frame.data.data() + static_cast<std::size_t>(y) * width_;
      std::vector<cfloat> state(mx);
      for (int x = 0; x < width_; ++x) {
        const float leaving = x >= mx ? line[x - mx] : 0.0f;
        const float delta = line[x] - leaving;
        for (int b = 0; b < mx; ++b) state[b] = twiddle_x_[b] * state[b] + delta;
        if (x >= mx - 1) {
          std::copy(state.begin(), state.end(),
                    row_stage_.begin() + (static_cast<std::ptrdiff_t>(y) * width_ + x) * mx);
        }
      }
    });

    // Stage 2: columns. Output layout per pixel is (ky, kx), kx inner.
    exec.for_each(static_cast<std::size_t>(width_ - mx + 1), [&](std::size_t c) {
      const int x = static_cast<int>(c) + mx - 1;
      std::vector<cfloat> state(static_cast<std::size_t>(mx) * my);
      for (int y = 0; y < height_; ++y) {
        const cfloat* in = row_stage_.data() + (static_cast<std::size_t>(y) * width_ + x) * mx;
        const cfloat* out_of_window =
            y >= my ? row_stage_.data() + (static_cast<std::size_t>(y - my) * width_ + x) * mx
                    : nullptr;
        for (int bx = 0; bx < mx; ++bx) {
          const cfloat delta = out_of_window ? in[bx] - out_of_window[bx] : in[bx];
          for (int by = 0; by < my; ++by) {
            cfloat& s = state[static_cast<std::size_t>(by) * mx + bx];
            s = twiddle_y_[by] * s + delta;
          }
        }
        if (y >= my - 1) {
          std::copy(state.begin(), state.end(),
                    slot.begin() + (static_cast<std::ptrdiff_t>(y) * width_ + x) * sb);
        }
      }
    });

    ++frames_seen_;
    field_.frame_index = frame.index;
    field_.ready = ready();
    if (!field_.ready) return field_;

    // Stage 3: temporal DFT, newest frame at mz = 0.
    exec.for_each(static_cast<std::size_t>(height_ - my + 1), [&](std::size_t r) {
      const int y = static_cast<int>(r) + my - 1;
      std::vector<const cfloat*> taps(mz);
      for (int x = mx - 1; x < width_; ++x) {
        const std::size_t pix = static_cast<std::size_t>(y) * width_ + x;
        for (int m = 0; m < mz; ++m) {
          taps[m] = ring_[(frames_seen_ - 1 - m) % mz].data() + pix * sb;
        }
        auto out = field_.at(x, y);
        for (int bz = 0; bz < mz; ++bz) {
          const cfloat* tw = temporal_.data() + static_cast<std::size_t>(bz) * mz;
          cfloat* dst = out.data() + static_cast<std::size_t>(bz) * sb;
          for (int s = 0; s < sb; ++s) {
            cfloat acc{};
            for (int m = 0; m < mz; ++m) acc += tw[m] * taps[m][s];
            dst[s] = acc;
          }
        }
      }
    });
    return field_;
  }

  const SpectrumField& field() const { return field_; }

 private:
  FilterParams params_;
  int width_;
  int height_;
  std::int64_t frames_seen_ = 0;
  std::vector<cfloat> twiddle_x_;
  std::vector<cfloat> twiddle_y_;
  std::vector<cfloat> temporal_;  // (kz, mz), normalization folded in
  std::vector<cfloat> row_stage_;
  std::vector<std::vector<cfloat>> ring_;
  SpectrumField field_;
};

}  // namespace whiten
