#pragma once

// Background velocity from the local 3-D autocorrelation.
//
// Per pixel: zero the spatial-DC column, apply a separable Hann window as a
// circular 3-tap convolution over bins, form the power spectrum, evaluate the
// autocorrelation on the fractional lag grid at temporal lag 1, divide out
// the spatial window's autocorrelation, smooth over time and take the argmax
// as the velocity.

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "whiten/core.hpp"
#include "whiten/parallel.hpp"
#include "whiten/spectrum.hpp"

namespace whiten {

/// Zeros bins with kx = 0 and ky = 0, for every kz.
inline void suppress_spatial_dc(std::span<cfloat> bins, const FilterParams& p) {
  for (int bz = -p.kz; bz <= p.kz; ++bz) bins[p.bin_index(0, 0, bz)] = cfloat{};
}

inline SpectrumField suppress_spatial_dc(const SpectrumField& s, const FilterParams& p) {
  SpectrumField out = s;
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) suppress_spatial_dc(out.at(x, y), p);
  return out;
}

namespace detail {

// out[k] = in[k]/2 - (in[k-1] + in[k+1])/4 along one axis, circularly.
inline void hann_axis(std::span<const cfloat> in, std::span<cfloat> out, int len, int stride,
                      int count_outer, int outer_stride, int count_inner) {
  for (int o = 0; o < count_outer; ++o)
    for (int i = 0; i < count_inner; ++i) {
      const std::size_t base = static_cast<std::size_t>(o) * outer_stride + i;
      for (int k = 0; k < len; ++k) {
        const int lo = k == 0 ? len - 1 : k - 1;
        const int hi = k == len - 1 ? 0 : k + 1;
        out[base + static_cast<std::size_t>(k) * stride] =
            0.5f * in[base + static_cast<std::size_t>(k) * stride] -
            0.25f * (in[base + static_cast<std::size_t>(lo) * stride] +
                     in[base + static_cast<std::size_t>(hi) * stride]);
      }
    }
}

}  // namespace detail

/// Hann conditioning in all three dimensions; equivalent to multiplying the
/// window samples by w[m] = 1/2 - 1/2 cos(2 pi m / M) before the transform.
/// `scratch` must hold bins_per_pixel values.
inline void hann_condition(std::span<const cfloat> in, std::span<cfloat> out,
                           std::span<cfloat> scratch, const FilterParams& p) {
  const int mx = p.mx(), my = p.my(), mz = p.mz();
  // x: stride 1, rows of mx.
  detail::hann_axis(in, scratch, mx, 1, mz * my, mx, 1);
  // y: stride mx, within each kz plane.
  detail::hann_axis(scratch, out, my, mx, mz, mx * my, mx);
  // z: stride mx*my.
  std::copy(out.begin(), out.end(), scratch.begin());
  detail::hann_axis(scratch, out, mz, mx * my, 1, 0, mx * my);
}

inline SpectrumField hann_condition(const SpectrumField& s, const FilterParams& p) {
  SpectrumField out = s;
  std::vector<cfloat> scratch(s.bins);
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) hann_condition(s.at(x, y), out.at(x, y), scratch, p);
  return out;
}

inline void power_spectrum(std::span<const cfloat> bins, std::span<float> power) {
  for (std::size_t i = 0; i < bins.size(); ++i) power[i] = std::norm(bins[i]);
}

struct PowerField {
  int width = 0;
  int height = 0;
  int bins = 0;
  std::vector<float> data;

  PowerField() = default;
  PowerField(const FilterParams& p, int w, int h)
      : width(w), height(h), bins(p.bins_per_pixel()),
        data(static_cast<std::size_t>(w) * h * bins) {}
  std::span<float> at(int x, int y) {
    return {data.data() + (static_cast<std::size_t>(y) * width + x) * bins,
            static_cast<std::size_t>(bins)};
  }
  std::span<const float> at(int x, int y) const {
    return {data.data() + (static_cast<std::size_t>(y) * width + x) * bins,
            static_cast<std::size_t>(bins)};
  }
};

inline PowerField power_spectrum(const SpectrumField& s, const FilterParams& p) {
  PowerField out(p, s.width, s.height);
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) power_spectrum(s.at(x, y), out.at(x, y));
  return out;
}

/// Separable evaluation of R(l) = sum_k exp(-j2pi(kx lx/Mx + ky ly/My + kz/Mz)) P(k)
/// on the lag grid.
class Autocorrelator {
 public:
  explicit Autocorrelator(const FilterParams& p) : p_(p) {
    for (int b = -p.kz; b <= p.kz; ++b) tz_.push_back(cfloat(std::polar(1.0, -2.0 * kPi * b / p.mz())));
    for (double l : p.lag_grid_x)
      for (int b = -p.kx; b <= p.kx; ++b)
        tx_.push_back(cfloat(std::polar(1.0, -2.0 * kPi * b * l / p.mx())));
    for (double l : p.lag_grid_y)
      for (int b = -p.ky; b <= p.ky; ++b)
        ty_.push_back(cfloat(std::polar(1.0, -2.0 * kPi * b * l / p.my())));
    const auto wx = hann_autocorrelation(p.mx(), p.kx, p.lag_grid_x);
    const auto wy = hann_autocorrelation(p.my(), p.ky, p.lag_grid_y);
    for (double gx : wx)
      for (double gy : wy) compensation_.push_back(static_cast<float>(1.0 / (gx * gy)));
  }

  /// Circular autocorrelation of the length-m Hann window, trigonometrically
  /// interpolated at each lag and normalized to 1 at lag 0.
  static std::vector<double> hann_autocorrelation(int m, int half, const std::vector<double>& lags) {
    std::vector<double> power;
    for (int b = -half; b <= half; ++b) {
      cdouble acc{};
      for (int i = 0; i < m; ++i) {
        acc += std::polar(0.5 - 0.5 * std::cos(2.0 * kPi * i / m), 2.0 * kPi * b * i / m);
      }
      power.push_back(std::norm(acc));
    }
    auto at = [&](double l) {
      double r = 0.0;
      for (int b = -half; b <= half; ++b) r += power[b + half] * std::cos(2.0 * kPi * b * l / m);
      return r;
    };
    const double zero = at(0.0);
    std::vector<double> out;
    for (double l : lags) out.push_back(at(l) / zero);
    return out;
  }

  /// Divides out the spatial window's own autocorrelation, which otherwise
  /// pulls the peak toward zero lag.
  void compensate_window(std::span<float> r) const {
    for (std::size_t i = 0; i < r.size(); ++i) r[i] *= compensation_[i];
  }

  int lag_count() const { return p_.lag_count(); }
  std::size_t scratch_size() const {
    return static_cast<std::size_t>(p_.spatial_bins()) + p_.lag_grid_x.size() * p_.my();
  }

  /// R on the lag grid (lag_index order). When `imag` is non-empty it
  /// receives the imaginary parts that the real output discards.
  void evaluate(std::span<const float> power, std::span<float> r, std::span<cfloat> scratch,
                std::span<float> imag = {}) const {
    const int mx = p_.mx(), my = p_.my(), mz = p_.mz();
    const int sb = mx * my;
    const int nlx = static_cast<int>(p_.lag_grid_x.size());
    const int nly = static_cast<int>(p_.lag_grid_y.size());
    cfloat* collapsed = scratch.data();     // (ky, kx)
    cfloat* partial = scratch.data() + sb;  // (lx, ky)

    for (int s = 0; s < sb; ++s) {
      cfloat acc{};
      for (int z = 0; z < mz; ++z) acc += tz_[z] * power[static_cast<std::size_t>(z) * sb + s];
      collapsed[s] = acc;
    }
    for (int ix = 0; ix < nlx; ++ix) {
      const cfloat* tw = tx_.data() + static_cast<std::size_t>(ix) * mx;
      for (int y = 0; y < my; ++y) {
        const cfloat* row = collapsed + static_cast<std::size_t>(y) * mx;
        cfloat acc{};
        for (int x = 0; x < mx; ++x) acc += tw[x] * row[x];
        partial[static_cast<std::size_t>(ix) * my + y] = acc;
      }
    }
    for (int ix = 0; ix < nlx; ++ix) {
      const cfloat* a = partial + static_cast<std::size_t>(ix) * my;
      for (int iy = 0; iy < nly; ++iy) {
        const cfloat* tw = ty_.data() + static_cast<std::size_t>(iy) * my;
        cfloat acc{};
        for (int y = 0; y < my; ++y) acc += tw[y] * a[y];
        r[static_cast<std::size_t>(ix) * nly + iy] = acc.real();
        if (!imag.empty()) imag[static_cast<std::size_t>(ix) * nly + iy] = acc.imag();
      }
    }
  }

 private:
  FilterParams p_;
  std::vector<cfloat> tz_;
  std::vector<cfloat> tx_;  // (lx, kx)
  std::vector<cfloat> ty_;  // (ly, ky)
  std::vector<float> compensation_;  // lag_index order
};

/// Convenience single-pixel form.
inline std::vector<float> autocorr(std::span<const float> power, const FilterParams& p) {
  Autocorrelator ac(p);
  std::vector<float> r(p.lag_count());
  std::vector<cfloat> scratch(ac.scratch_size());
  ac.evaluate(power, r, scratch);
  return r;
}

/// Exponential smoothing: rhat = (1 - alpha) r + alpha rhat; `first` copies r.
inline void smooth(std::span<const float> r, std::span<float> rhat, double alpha, bool first) {
  if (first) {
    std::copy(r.begin(), r.end(), rhat.begin());
    return;
  }
  const float a = static_cast<float>(alpha);
  const float b = static_cast<float>(1.0 - alpha);
  for (std::size_t i = 0; i < r.size(); ++i) rhat[i] = b * r[i] + a * rhat[i];
}

/// Argmax over the lag grid; ties prefer the smaller |v|, then the smaller
/// (ix, iy).
inline GridIndex pick_velocity(std::span<const float> rhat, const FilterParams& p) {
  const int nlx = static_cast<int>(p.lag_grid_x.size());
  const int nly = static_cast<int>(p.lag_grid_y.size());
  GridIndex best{};
  float best_value = -std::numeric_limits<float>::infinity();
  double best_norm = std::numeric_limits<double>::infinity();
  for (int ix = 0; ix < nlx; ++ix)
    for (int iy = 0; iy < nly; ++iy) {
      const float value = rhat[static_cast<std::size_t>(ix) * nly + iy];
      const double norm = p.lag_grid_x[ix] * p.lag_grid_x[ix] + p.lag_grid_y[iy] * p.lag_grid_y[iy];
      if (value > best_value || (value == best_value && norm < best_norm)) {
        best = {ix, iy};
        best_value = value;
        best_norm = norm;
      }
    }
  return best;
}

struct AutocorrField {
  int width = 0;
  int height = 0;
  int lags = 0;
  std::vector<float> data;

  AutocorrField() = default;
  AutocorrField(const FilterParams& p, int w, int h)
      : width(w), height(h), lags(p.lag_count()), data(static_cast<std::size_t>(w) * h * lags) {}
  std::span<float> at(int x, int y) {
    return {data.data() + (static_cast<std::size_t>(y) * width + x) * lags,
            static_cast<std::size_t>(lags)};
  }
  std::span<const float> at(int x, int y) const {
    return {data.data() + (static_cast<std::size_t>(y) * width + x) * lags,
            static_cast<std::size_t>(lags)};
  }
};

struct VelocityField {
  int width = 0;
  int height = 0;
  std::vector<GridIndex> index;
  std::vector<Velocity> velocity;
  ValidityMask mask;

  VelocityField() = default;
  VelocityField(int w, int h)
      : width(w), height(h), index(static_cast<std::size_t>(w) * h),
        velocity(static_cast<std::size_t>(w) * h), mask(w, h) {}
  void set(int x, int y, GridIndex g, Velocity v) {
    const std::size_t i = static_cast<std::size_t>(y) * width + x;
    index[i] = g;
    velocity[i] = v;
    mask.set(x, y, true);
  }
  Velocity at(int x, int y) const { return velocity[static_cast<std::size_t>(y) * width + x]; }
  GridIndex index_at(int x, int y) const { return index[static_cast<std::size_t>(y) * width + x]; }
};

inline VelocityField pick_velocity(const AutocorrField& rhat, const FilterParams& p,
                                   const ValidityMask& valid) {
  VelocityField out(rhat.width, rhat.height);
  for (int y = 0; y < rhat.height; ++y)
    for (int x = 0; x < rhat.width; ++x) {
      if (!valid.at(x, y)) continue;
      const GridIndex g = pick_velocity(rhat.at(x, y), p);
      out.set(x, y, g, p.velocity_at(g));
    }
  return out;
}

/// Stateful per-pixel velocity estimator over a stream of spectra. The
/// velocity field is reported at anchor coordinates.
class FlowEstimator {
 public:
  FlowEstimator(const FilterParams& p, int width, int height)
      : p_(p), width_(width), height_(height), correlator_(p), power_(p, width, height),
        r_(p, width, height), rhat_(p, width, height), velocity_(width, height) {}

  /// DC suppression, Hann conditioning and power, for every valid pixel.
  void condition(const SpectrumField& s, Executor& exec) {
    exec.for_each(rows(), [&](std::size_t r) {
      const int y = static_cast<int>(r) + p_.my() - 1;
      std::vector<cfloat> work(s.bins), conditioned(s.bins), scratch(s.bins);
      for (int x = p_.mx() - 1; x < width_; ++x) {
        auto in = s.at(x, y);
        std::copy(in.begin(), in.end(), work.begin());
        suppress_spatial_dc(work, p_);
        hann_condition(work, conditioned, scratch, p_);
        power_spectrum(conditioned, power_.at(x, y));
      }
    });
  }

  /// Autocorrelation, smoothing and argmax from the last conditioned power.
  const VelocityField& correlate(Executor& exec) {
    const bool first = !primed_;
    exec.for_each(rows(), [&](std::size_t r) {
      const int y = static_cast<int>(r) + p_.my() - 1;
      std::vector<cfloat> scratch(correlator_.scratch_size());
      std::vector<float> compensated(correlator_.lag_count());
      for (int x = p_.mx() - 1; x < width_; ++x) {
        auto r_xy = r_.at(x, y);
        correlator_.evaluate(power_.at(x, y), r_xy, scratch);
        std::copy(r_xy.begin(), r_xy.end(), compensated.begin());
        correlator_.compensate_window(compensated);
        smooth(compensated, rhat_.at(x, y), p_.alpha, first);
        const GridIndex g = pick_velocity(rhat_.at(x, y), p_);
        velocity_.set(x, y, g, p_.velocity_at(g));
      }
    });
    primed_ = true;
    return velocity_;
  }

  const VelocityField& update(const SpectrumField& s, Executor& exec) {
    condition(s, exec);
    return correlate(exec);
  }

  const PowerField& power() const { return power_; }
  const AutocorrField& autocorrelation() const { return r_; }
  const AutocorrField& smoothed() const { return rhat_; }
  const VelocityField& velocity() const { return velocity_; }

 private:
  std::size_t rows() const { return static_cast<std::size_t>(height_ - p_.my() + 1); }

  FilterParams p_;
  int width_;
  int height_;
  Autocorrelator correlator_;
  PowerField power_;
  AutocorrField r_;
  AutocorrField rhat_;
  VelocityField velocity_;
  bool primed_ = false;
};

}  // namespace whiten
