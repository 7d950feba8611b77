#pragma once

// Configuration and shared frame types for the clutter-whitening pipeline.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace whiten {

inline constexpr const char* kVersion = "0.1.0";

using cfloat = std::complex<float>;
using cdouble = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Velocity {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Velocity&, const Velocity&) = default;
};

/// Index into the (lag_grid_x, lag_grid_y) velocity hypothesis grid.
struct GridIndex {
  int ix = 0;
  int iy = 0;
  friend bool operator==(const GridIndex&, const GridIndex&) = default;
};

/// Design constants of the analysis window, the prediction filters and the
/// velocity estimator. Sizes are derived from the half-widths on demand so
/// they can never disagree with them.
struct FilterParams {
  int kx = 4, ky = 4, kz = 2;  // half-window sizes
  int bx = 3, by = 3;          // spatial half-bandwidths, in bins
  std::array<int, 3> mhat{4, 4, 2};
  double alpha = 0.0;
  std::vector<double> lag_grid_x;
  std::vector<double> lag_grid_y;

  int mx() const { return 2 * kx + 1; }
  int my() const { return 2 * ky + 1; }
  int mz() const { return 2 * kz + 1; }
  int wx() const { return 2 * bx + 1; }
  int wy() const { return 2 * by + 1; }
  int delta_x() const { return (mx() - 1) / 2; }
  int delta_y() const { return (my() - 1) / 2; }
  int delta_z() const { return (mz() - 1) / 2; }

  int window_size() const { return mx() * my() * mz(); }
  int bins_per_pixel() const { return window_size(); }
  int spatial_bins() const { return mx() * my(); }
  int retained_bins() const { return wx() * wy() * mz(); }
  int lag_count() const {
    return static_cast<int>(lag_grid_x.size() * lag_grid_y.size());
  }

  /// Offset of bin (kx, ky, kz), each in [-K, +K], within one pixel's bins.
  /// Order is kz outer, ky, kx inner.
  int bin_index(int bin_x, int bin_y, int bin_z) const {
    return ((bin_z + kz) * my() + (bin_y + ky)) * mx() + (bin_x + kx);
  }
  /// Offset of window sample m within a backward-indexed block.
  int sample_index(int m_x, int m_y, int m_z) const {
    return (m_z * my() + m_y) * mx() + m_x;
  }
  /// Offset of a retained filter coefficient, |kx| <= Bx, |ky| <= By.
  int retained_index(int bin_x, int bin_y, int bin_z) const {
    return ((bin_z + kz) * wy() + (bin_y + by)) * wx() + (bin_x + bx);
  }
  /// Offset of lag hypothesis (ix, iy); ix outer.
  int lag_index(GridIndex g) const {
    return g.ix * static_cast<int>(lag_grid_y.size()) + g.iy;
  }
  Velocity velocity_at(GridIndex g) const {
    return {lag_grid_x.at(g.ix), lag_grid_y.at(g.iy)};
  }

  /// Grid index of an exact grid velocity, if there is one.
  std::optional<GridIndex> grid_index_of(Velocity v, double tol = 1e-9) const {
    std::optional<GridIndex> out;
    for (int i = 0; i < static_cast<int>(lag_grid_x.size()); ++i) {
      if (std::abs(lag_grid_x[i] - v.x) > tol) continue;
      for (int j = 0; j < static_cast<int>(lag_grid_y.size()); ++j) {
        if (std::abs(lag_grid_y[j] - v.y) <= tol) return GridIndex{i, j};
      }
    }
    return out;
  }
};

inline std::vector<double> uniform_grid(double lo, double step, double hi) {
  std::vector<double> out;
  const int n = static_cast<int>(std::floor((hi - lo) / step + 1e-9)) + 1;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(lo + step * i);
  return out;
}

inline FilterParams default_params() {
  FilterParams p;
  p.kx = p.ky = 4;
  p.kz = 2;
  p.bx = p.by = 3;
  p.mhat = {4, 4, 2};
  p.alpha = std::exp(-1.0 / 10.0);
  // [-8 .. +8] / 4
  for (int i = -8; i <= 8; ++i) p.lag_grid_x.push_back(i / 4.0);
  p.lag_grid_y = p.lag_grid_x;
  return p;
}

/// First violated constraint, or nullopt when the parameters are usable.
inline std::optional<std::string> validate(const FilterParams& p) {
  auto fmt = [](std::string_view what, auto value) {
    std::ostringstream os;
    os << what << " (got " << value << ")";
    return os.str();
  };
  if (p.kx < 1) return fmt("kx must be >= 1", p.kx);
  if (p.ky < 1) return fmt("ky must be >= 1", p.ky);
  if (p.kz < 0) return fmt("kz must be >= 0", p.kz);
  if (p.bx < 0) return fmt("bx must be >= 0", p.bx);
  if (p.by < 0) return fmt("by must be >= 0", p.by);
  if (p.bx >= p.kx) return fmt("bandwidth must satisfy B < K: bx >= kx, bx", p.bx);
  if (p.by >= p.ky) return fmt("bandwidth must satisfy B < K: by >= ky, by", p.by);
  const std::array<int, 3> lens{p.mx(), p.my(), p.mz()};
  const char* names[] = {"mhat_x", "mhat_y", "mhat_z"};
  for (int d = 0; d < 3; ++d) {
    if (p.mhat[d] < 0 || p.mhat[d] > lens[d] - 1) {
      return fmt(std::string(names[d]) + " must be in [0, M-1]", p.mhat[d]);
    }
  }
  if (!(p.alpha > 0.0 && p.alpha < 1.0)) {
    return fmt("smoothing pole must be in (0,1): alpha", p.alpha);
  }
  const std::pair<const std::vector<double>*, const char*> grids[] = {
      {&p.lag_grid_x, "lag_grid_x"}, {&p.lag_grid_y, "lag_grid_y"}};
  const double lag_limit = std::min(p.kx, p.ky);
  for (const auto& [grid, name] : grids) {
    if (grid->empty()) return std::string(name) + " must not be empty";
    for (std::size_t i = 0; i < grid->size(); ++i) {
      if (!std::isfinite((*grid)[i])) return fmt(std::string(name) + " must be finite", (*grid)[i]);
      if (i > 0 && !((*grid)[i] > (*grid)[i - 1])) {
        return fmt(std::string(name) + " must be strictly increasing at", (*grid)[i]);
      }
      if (std::abs((*grid)[i]) > lag_limit) {
        return fmt(std::string(name) + " lag magnitude must not exceed min(kx, ky)",
                   (*grid)[i]);
      }
    }
  }
  return std::nullopt;
}

inline void require_valid(const FilterParams& p) {
  if (auto err = validate(p)) throw Error("invalid parameters: " + *err);
}

// ---------------------------------------------------------------------------
// Parameter file: `name = value` per line, `#` starts a comment.

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw Error("parameter '" + key + "': not a number: '" + text + "'");
  }
  if (trim(text.substr(used)).size() != 0) {
    throw Error("parameter '" + key + "': trailing characters in '" + text + "'");
  }
  return v;
}

inline int parse_int(const std::string& key, const std::string& text) {
  const double v = parse_double(key, text);
  if (v != std::floor(v)) throw Error("parameter '" + key + "': expected an integer");
  return static_cast<int>(v);
}

// Either `lo:step:hi` or a comma-separated list.
inline std::vector<double> parse_grid(const std::string& key, const std::string& text) {
  std::vector<std::string> parts;
  if (text.find(':') != std::string::npos) {
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(trim(item));
    if (parts.size() != 3) throw Error("parameter '" + key + "': range must be lo:step:hi");
    const double lo = parse_double(key, parts[0]);
    const double step = parse_double(key, parts[1]);
    const double hi = parse_double(key, parts[2]);
    if (!(step > 0.0) || hi < lo) throw Error("parameter '" + key + "': bad range");
    return uniform_grid(lo, step, hi);
  }
  std::stringstream ss(text);
  std::string item;
  std::vector<double> out;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  return out;
}

}  // namespace detail

/// Applies `name = value` lines on top of `base`. Unknown keys are rejected.
inline FilterParams parse_params(std::string_view text, FilterParams base = default_params()) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw Error("parameter file line " + std::to_string(lineno) + ": expected 'name = value'");
    }
    const std::string key = detail::trim(body.substr(0, eq));
    const std::string value = detail::trim(body.substr(eq + 1));
    if (key == "kx") base.kx = detail::parse_int(key, value);
    else if (key == "ky") base.ky = detail::parse_int(key, value);
    else if (key == "kz") base.kz = detail::parse_int(key, value);
    else if (key == "bx") base.bx = detail::parse_int(key, value);
    else if (key == "by") base.by = detail::parse_int(key, value);
    else if (key == "mhat_x") base.mhat[0] = detail::parse_int(key, value);
    else if (key == "mhat_y") base.mhat[1] = detail::parse_int(key, value);
    else if (key == "mhat_z") base.mhat[2] = detail::parse_int(key, value);
    else if (key == "alpha") base.alpha = detail::parse_double(key, value);
    else if (key == "lag_grid") base.lag_grid_x = base.lag_grid_y = detail::parse_grid(key, value);
    else if (key == "lag_grid_x") base.lag_grid_x = detail::parse_grid(key, value);
    else if (key == "lag_grid_y") base.lag_grid_y = detail::parse_grid(key, value);
    else throw Error("parameter file line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  return base;
}

inline FilterParams load_params(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open parameter file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  FilterParams p = parse_params(ss.str());
  require_valid(p);
  return p;
}

inline std::string format_params(const FilterParams& p) {
  std::ostringstream os;
  os.precision(17);
  auto grid = [&](const std::vector<double>& g) {
    for (std::size_t i = 0; i < g.size(); ++i) os << (i ? ", " : "") << g[i];
  };
  os << "kx = " << p.kx << "\nky = " << p.ky << "\nkz = " << p.kz << "\nbx = " << p.bx
     << "\nby = " << p.by << "\nmhat_x = " << p.mhat[0] << "\nmhat_y = " << p.mhat[1]
     << "\nmhat_z = " << p.mhat[2] << "\nalpha = " << p.alpha << "\nlag_grid_x = ";
  grid(p.lag_grid_x);
  os << "\nlag_grid_y = ";
  grid(p.lag_grid_y);
  os << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------

/// One monochrome image, row-major.
struct Frame {
  int width = 0;
  int height = 0;
  std::int64_t index = 0;
  std::vector<float> data;

  Frame() = default;
  Frame(int w, int h, std::int64_t idx = 0, float fill = 0.0f)
      : width(w), height(h), index(idx), data(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return data.size(); }
};

struct ValidityMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> valid;

  ValidityMask() = default;
  ValidityMask(int w, int h) : width(w), height(h), valid(static_cast<std::size_t>(w) * h, 0) {}

  bool at(int x, int y) const { return valid[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { valid[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
  }
};

inline void check_frame(const Frame& f, int width, int height) {
  if (f.width != width || f.height != height) {
    throw Error("frame dimension mismatch: expected " + std::to_string(width) + "x" +
                std::to_string(height) + ", got " + std::to_string(f.width) + "x" +
                std::to_string(f.height));
  }
  if (f.data.size() != static_cast<std::size_t>(width) * height) {
    throw Error("frame payload size does not match its dimensions");
  }
}

}  // namespace whiten
