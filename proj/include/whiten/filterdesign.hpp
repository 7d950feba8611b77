#pragma once

// Velocity-tuned background predictors designed by frequency sampling.
//
// The sample-domain kernel is a separable product of Dirichlet kernels of
// order W = 2B + 1, sheared in time by the velocity:
//
//   H(m) = Wx Wy / (Mx My Mz)
//          * D_Wx([mx - mhat_x - vx (mz - mhat_z)] / Mx)
//          * D_Wy([my - mhat_y - vy (mz - mhat_z)] / My)
//
// Its DFT over the retained bins (|kx| <= Bx, |ky| <= By, all kz) is the set
// of coefficients applied to the local spectrum.

#include <chrono>
#include <cmath>
#include <vector>

#include "whiten/core.hpp"
#include "whiten/parallel.hpp"
#include "whiten/spectrum.hpp"

namespace whiten {

/// sin(pi W w) / (W sin(pi w)). W must be odd; the removable singularities
/// at integer w evaluate to 1.
inline double dirichlet(double w, int order) {
  if (order < 1 || order % 2 == 0) throw Error("dirichlet: order must be odd and positive");
  const double s = std::sin(kPi * w);
  if (std::abs(s) < 1e-9) return 1.0;
  return std::sin(kPi * order * w) / (order * s);
}

struct SampleKernel {
  Velocity velocity;
  std::vector<double> taps;  // sample_index order
};

struct FreqKernel {
  Velocity velocity;
  std::vector<cfloat> coeffs;  // retained_index order
};

struct FrequencyPoint {
  double fx = 0.0, fy = 0.0, fz = 0.0;
};

namespace detail {

inline void require_in_grid(const FilterParams& p, Velocity v) {
  const double eps = 1e-12;
  if (v.x < p.lag_grid_x.front() - eps || v.x > p.lag_grid_x.back() + eps ||
      v.y < p.lag_grid_y.front() - eps || v.y > p.lag_grid_y.back() + eps) {
    throw Error("velocity outside the configured lag grid");
  }
}

}  // namespace detail

inline SampleKernel sample_kernel(const FilterParams& p, Velocity v) {
  detail::require_in_grid(p, v);
  SampleKernel k{v, std::vector<double>(p.window_size())};
  const double gain =
      static_cast<double>(p.wx()) * p.wy() / (static_cast<double>(p.window_size()));
  for (int mz = 0; mz < p.mz(); ++mz) {
    const double dt = mz - p.mhat[2];
    for (int my = 0; my < p.my(); ++my) {
      const double dy = dirichlet((my - p.mhat[1] - v.y * dt) / p.my(), p.wy());
      for (int mx = 0; mx < p.mx(); ++mx) {
        const double dx = dirichlet((mx - p.mhat[0] - v.x * dt) / p.mx(), p.wx());
        k.taps[p.sample_index(mx, my, mz)] = gain * dx * dy;
      }
    }
  }
  return k;
}

/// H(k) = sum_m conj(F(m; k)) H(m), restricted to the retained bins.
/// Evaluated one dimension at a time.
inline FreqKernel kernel_to_freq(const SampleKernel& kernel, const FilterParams& p) {
  const int mx = p.mx(), my = p.my(), mz = p.mz();
  const int wx = p.wx(), wy = p.wy();
  auto table = [](int half, int len) {
    std::vector<cdouble> t;
    for (int b = -half; b <= half; ++b)
      for (int m = 0; m < len; ++m) t.push_back(std::polar(1.0, -2.0 * kPi * b * m / len));
    return t;
  };
  const auto tx = table(p.bx, mx);
  const auto ty = table(p.by, my);
  const auto tz = table(p.kz, mz);

  // (mz, my, bx)
  std::vector<cdouble> sx(static_cast<std::size_t>(mz) * my * wx);
  for (int z = 0; z < mz; ++z)
    for (int y = 0; y < my; ++y)
      for (int b = 0; b < wx; ++b) {
        cdouble acc{};
        for (int x = 0; x < mx; ++x) acc += tx[b * mx + x] * kernel.taps[p.sample_index(x, y, z)];
        sx[(static_cast<std::size_t>(z) * my + y) * wx + b] = acc;
      }
  // (mz, by, bx)
  std::vector<cdouble> sy(static_cast<std::size_t>(mz) * wy * wx);
  for (int z = 0; z < mz; ++z)
    for (int c = 0; c < wy; ++c)
      for (int b = 0; b < wx; ++b) {
        cdouble acc{};
        for (int y = 0; y < my; ++y) acc += ty[c * my + y] * sx[(static_cast<std::size_t>(z) * my + y) * wx + b];
        sy[(static_cast<std::size_t>(z) * wy + c) * wx + b] = acc;
      }
  FreqKernel out{kernel.velocity, std::vector<cfloat>(p.retained_bins())};
  const double norm = 1.0 / std::sqrt(static_cast<double>(p.window_size()));
  for (int d = 0; d < mz; ++d)
    for (int c = 0; c < wy; ++c)
      for (int b = 0; b < wx; ++b) {
        cdouble acc{};
        for (int z = 0; z < mz; ++z) acc += tz[d * mz + z] * sy[(static_cast<std::size_t>(z) * wy + c) * wx + b];
        out.coeffs[(static_cast<std::size_t>(d) * wy + c) * wx + b] = cfloat(acc * norm);
      }
  return out;
}

/// Analytic frequency response: a sum over the retained spatial bins of
/// synthesis phase (b), window-centre modulation (c) and Dirichlet
/// interpolation (d) factors. At f = k / M this reproduces the coefficients.
inline cdouble freq_response(const FilterParams& p, Velocity v, FrequencyPoint f) {
  const double mx = p.mx(), my = p.my(), mz = p.mz();
  const double dlx = p.delta_x(), dly = p.delta_y(), dlz = p.delta_z();
  const auto cis = [](double cycles) { return std::polar(1.0, 2.0 * kPi * cycles); };

  const cdouble c = cis(-f.fx * dlx) * cis(-f.fy * dly) * cis(-f.fz * dlz);
  cdouble sum{};
  for (int by = -p.by; by <= p.by; ++by) {
    const double dy = dirichlet(f.fy - by / my, p.my());
    const cdouble b_y = cis(-by / my * (p.mhat[1] - dly));
    for (int bx = -p.bx; bx <= p.bx; ++bx) {
      const double dx = dirichlet(f.fx - bx / mx, p.mx());
      const double shear = v.x * bx / mx + v.y * by / my;
      const cdouble b_x = cis(-bx / mx * (p.mhat[0] - dlx));
      const cdouble b_z = cis(shear * (p.mhat[2] - dlz));
      const double dz = dirichlet(f.fz + shear, p.mz());
      sum += b_x * b_y * b_z * (dx * dy * dz);
    }
  }
  return c * sum / std::sqrt(mx * my * mz);
}

/// Coefficients obtained by sampling freq_response at every retained bin.
inline FreqKernel freq_sampled_kernel(const FilterParams& p, Velocity v) {
  detail::require_in_grid(p, v);
  FreqKernel out{v, std::vector<cfloat>(p.retained_bins())};
  for (int bz = -p.kz; bz <= p.kz; ++bz)
    for (int by = -p.by; by <= p.by; ++by)
      for (int bx = -p.bx; bx <= p.bx; ++bx) {
        const FrequencyPoint f{static_cast<double>(bx) / p.mx(), static_cast<double>(by) / p.my(),
                               static_cast<double>(bz) / p.mz()};
        out.coeffs[p.retained_index(bx, by, bz)] = cfloat(freq_response(p, v, f));
      }
  return out;
}

/// Inverse of kernel_to_freq over the retained bins.
inline std::vector<double> reconstruct_taps(const FreqKernel& k, const FilterParams& p) {
  std::vector<double> taps(p.window_size());
  for (int mz = 0; mz < p.mz(); ++mz)
    for (int my = 0; my < p.my(); ++my)
      for (int mx = 0; mx < p.mx(); ++mx) {
        cdouble acc{};
        for (int bz = -p.kz; bz <= p.kz; ++bz)
          for (int by = -p.by; by <= p.by; ++by)
            for (int bx = -p.bx; bx <= p.bx; ++bx)
              acc += cdouble(k.coeffs[p.retained_index(bx, by, bz)]) *
                     basis({mx, my, mz}, {bx, by, bz}, p);
        taps[p.sample_index(mx, my, mz)] = acc.real();
      }
  return taps;
}

/// One frequency-domain predictor per lag-grid point, indexed like the
/// velocity grid.
class FilterBank {
 public:
  FilterBank() = default;

  static FilterBank build(const FilterParams& p, Executor& exec) {
    require_valid(p);
    const auto start = std::chrono::steady_clock::now();
    FilterBank bank;
    bank.params_ = p;
    bank.nx_ = static_cast<int>(p.lag_grid_x.size());
    bank.ny_ = static_cast<int>(p.lag_grid_y.size());
    bank.kernels_.resize(static_cast<std::size_t>(bank.nx_) * bank.ny_);
    exec.for_each(bank.kernels_.size(), [&](std::size_t i) {
      const GridIndex g{static_cast<int>(i) / bank.ny_, static_cast<int>(i) % bank.ny_};
      bank.kernels_[i] = kernel_to_freq(sample_kernel(p, p.velocity_at(g)), p);
    });
    bank.build_seconds_ =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return bank;
  }

  const FreqKernel& at(GridIndex g) const {
    if (g.ix < 0 || g.ix >= nx_ || g.iy < 0 || g.iy >= ny_) {
      throw Error("filter bank index out of range");
    }
    return kernels_[static_cast<std::size_t>(g.ix) * ny_ + g.iy];
  }
  std::size_t size() const { return kernels_.size(); }
  int grid_x() const { return nx_; }
  int grid_y() const { return ny_; }
  double build_seconds() const { return build_seconds_; }
  const FilterParams& params() const { return params_; }
  const std::vector<FreqKernel>& kernels() const { return kernels_; }

 private:
  FilterParams params_;
  int nx_ = 0;
  int ny_ = 0;
  std::vector<FreqKernel> kernels_;
  double build_seconds_ = 0.0;
};

inline FilterBank build_bank(const FilterParams& p) {
  Executor serial;
  return FilterBank::build(p, serial);
}

}  // namespace whiten
