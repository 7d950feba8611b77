#pragma once

// Per-frame residual statistics against simulation ground truth.

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <vector>

#include "whiten/core.hpp"
#include "whiten/flow.hpp"

namespace whiten {

struct MetricsRow {
  std::int64_t frame = 0;
  double background_rms = 0.0;
  double peak_abs = 0.0;
  int peak_x = -1;
  int peak_y = -1;
  std::optional<Velocity> target;
  bool target_visible = false;
  bool hit = false;
  std::optional<double> velocity_error_median;
  std::optional<double> velocity_within_quarter;  // fraction of pixels with error <= 0.25
};

struct MetricsInput {
  const Frame* residual = nullptr;
  const ValidityMask* mask = nullptr;
  const VelocityField* velocity = nullptr;  // optional
  std::optional<Velocity> target;           // ground-truth centre for this frame
  double exclusion_radius = 0.0;            // target disk radius; one extra pixel is added
  std::optional<Velocity> true_velocity;    // background velocity
};

inline double chebyshev(double ax, double ay, double bx, double by) {
  return std::max(std::abs(ax - bx), std::abs(ay - by));
}

inline MetricsRow compute_metrics(const MetricsInput& in) {
  if (!in.residual || !in.mask) throw Error("metrics: residual and mask are required");
  const Frame& r = *in.residual;
  const ValidityMask& m = *in.mask;
  MetricsRow row;
  row.frame = r.index;
  row.target = in.target;

  double sum2 = 0.0;
  std::size_t n = 0;
  const double excl = in.exclusion_radius + 1.0;
  int x0 = r.width, x1 = -1, y0 = r.height, y1 = -1;
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x) {
      if (!m.at(x, y)) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
      const double v = r.at(x, y);
      if (std::abs(v) > row.peak_abs || row.peak_x < 0) {
        row.peak_abs = std::abs(v);
        row.peak_x = x;
        row.peak_y = y;
      }
      if (in.target) {
        const double dx = x - in.target->x, dy = y - in.target->y;
        if (dx * dx + dy * dy <= excl * excl) continue;
      }
      sum2 += v * v;
      ++n;
    }
  row.background_rms = n ? std::sqrt(sum2 / static_cast<double>(n)) : 0.0;

  if (in.target && x1 >= 0) {
    const Velocity c = *in.target;
    row.target_visible = c.x >= x0 && c.x <= x1 && c.y >= y0 && c.y <= y1;
    row.hit = chebyshev(row.peak_x, row.peak_y, c.x, c.y) <= 1.0;
  }

  if (in.velocity && in.true_velocity) {
    std::vector<double> err;
    for (int y = 0; y < r.height; ++y)
      for (int x = 0; x < r.width; ++x) {
        if (!m.at(x, y)) continue;
        const Velocity v = in.velocity->at(x, y);
        err.push_back(chebyshev(v.x, v.y, in.true_velocity->x, in.true_velocity->y));
      }
    if (!err.empty()) {
      const auto within = std::count_if(err.begin(), err.end(), [](double e) { return e <= 0.25 + 1e-12; });
      row.velocity_within_quarter = static_cast<double>(within) / static_cast<double>(err.size());
      auto mid = err.begin() + static_cast<std::ptrdiff_t>(err.size() / 2);
      std::nth_element(err.begin(), mid, err.end());
      double med = *mid;
      if (err.size() % 2 == 0) med = 0.5 * (med + *std::max_element(err.begin(), mid));
      row.velocity_error_median = med;
    }
  }
  return row;
}

inline const char* metrics_csv_header() {
  return "frame,background_rms,peak_abs,peak_x,peak_y,target_x,target_y,target_visible,hit,"
         "velocity_error_median,velocity_within_0.25";
}

inline void write_metrics_row(std::ostream& os, const MetricsRow& r) {
  auto opt = [&](const std::optional<double>& v) {
    if (v) os << *v;
  };
  os << r.frame << ',' << r.background_rms << ',' << r.peak_abs << ',' << r.peak_x << ','
     << r.peak_y << ',';
  if (r.target) os << r.target->x;
  os << ',';
  if (r.target) os << r.target->y;
  os << ',' << (r.target_visible ? 1 : 0) << ',' << (r.hit ? 1 : 0) << ',';
  opt(r.velocity_error_median);
  os << ',';
  opt(r.velocity_within_quarter);
  os << '\n';
}

}  // namespace whiten
