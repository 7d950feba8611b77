#pragma once

// Image-sequence storage.
//
// A sequence is a directory holding `sequence.json` plus its payload:
//   f32le  one `frames.f32` file, frames back to back, little-endian floats
//   pgm16  one binary PGM (P5, maxval 65535) per frame, `frame_00000.pgm` ...,
//          value = sample * scale + offset

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "whiten/core.hpp"
#include "whiten/scenegen.hpp"

namespace whiten {

namespace fs = std::filesystem;

struct SequenceHeader {
  int width = 0;
  int height = 0;
  int frame_count = 0;
  std::string dtype = "f32le";
  double scale = 1.0;
  double offset = 0.0;
  std::int64_t first_index = 0;
  nlohmann::json source = nlohmann::json::object();
};

inline nlohmann::json to_json(const SequenceHeader& h) {
  return {{"width", h.width},         {"height", h.height}, {"frame_count", h.frame_count},
          {"dtype", h.dtype},         {"scale", h.scale},   {"offset", h.offset},
          {"first_index", h.first_index}, {"source", h.source}};
}

inline SequenceHeader header_from_json(const nlohmann::json& j) {
  SequenceHeader h;
  try {
    h.width = j.at("width").get<int>();
    h.height = j.at("height").get<int>();
    h.frame_count = j.at("frame_count").get<int>();
    h.dtype = j.at("dtype").get<std::string>();
    h.scale = j.value("scale", 1.0);
    h.offset = j.value("offset", 0.0);
    h.first_index = j.value("first_index", std::int64_t{0});
    if (j.contains("source")) h.source = j.at("source");
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed sequence header: ") + e.what());
  }
  if (h.width <= 0 || h.height <= 0 || h.frame_count < 0) {
    throw Error("malformed sequence header: bad dimensions");
  }
  if (h.dtype != "f32le" && h.dtype != "pgm16") {
    throw Error("malformed sequence header: unknown dtype '" + h.dtype + "'");
  }
  if (h.dtype == "pgm16" && !(h.scale > 0.0)) {
    throw Error("malformed sequence header: scale must be > 0");
  }
  return h;
}

inline std::string frame_file_name(int i) {
  std::ostringstream os;
  os << "frame_" << std::setw(5) << std::setfill('0') << i << ".pgm";
  return os.str();
}

// ---------------------------------------------------------------------------
// Single 16-bit PGM.

inline void write_pgm16(const fs::path& path, int width, int height,
                        const std::vector<std::uint16_t>& samples) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << "P5\n" << width << " " << height << "\n65535\n";
  std::vector<unsigned char> bytes(samples.size() * 2);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    bytes[2 * i] = static_cast<unsigned char>(samples[i] >> 8);
    bytes[2 * i + 1] = static_cast<unsigned char>(samples[i] & 0xff);
  }
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("short write to " + path.string());
}

inline std::vector<std::uint16_t> read_pgm16(const fs::path& path, int& width, int& height) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  auto token = [&]() {
    std::string t;
    char c;
    while (f.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(f, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(c);
    }
    return t;
  };
  if (token() != "P5") throw Error("not a binary PGM: " + path.string());
  int maxval = 0;
  try {
    width = std::stoi(token());
    height = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw Error("malformed PGM header: " + path.string());
  }
  if (width <= 0 || height <= 0 || maxval < 256 || maxval > 65535) {
    throw Error("unsupported PGM (need 16-bit samples): " + path.string());
  }
  const std::size_t n = static_cast<std::size_t>(width) * height;
  std::vector<unsigned char> bytes(n * 2);
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(f.gcount()) != bytes.size()) {
    throw Error("truncated PGM payload: " + path.string());
  }
  std::vector<std::uint16_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = static_cast<std::uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1]);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace detail {

inline std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xff) << 24) | ((v & 0xff00) << 8) | ((v >> 8) & 0xff00) | (v >> 24);
}

inline void fit_quantization(const std::vector<Frame>& frames, SequenceHeader& h) {
  float lo = std::numeric_limits<float>::infinity();
  float hi = -std::numeric_limits<float>::infinity();
  for (const auto& f : frames)
    for (float v : f.data) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (frames.empty() || !std::isfinite(lo)) {
    h.offset = 0.0;
    h.scale = 1.0;
    return;
  }
  h.offset = lo;
  h.scale = hi > lo ? (static_cast<double>(hi) - lo) / 65535.0 : 1.0;
}

}  // namespace detail

/// Writes `frames` under directory `dir`. For pgm16 the scale and offset are
/// fitted to the data range and recorded in the header.
inline SequenceHeader write_sequence(const std::vector<Frame>& frames, SequenceHeader header,
                                     const fs::path& dir) {
  fs::create_directories(dir);
  header.frame_count = static_cast<int>(frames.size());
  if (!frames.empty()) {
    header.width = frames.front().width;
    header.height = frames.front().height;
    header.first_index = frames.front().index;
  }
  for (const auto& f : frames) check_frame(f, header.width, header.height);

  if (header.dtype == "f32le") {
    std::ofstream out(dir / "frames.f32", std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / "frames.f32").string());
    std::vector<std::uint32_t> words;
    for (const auto& f : frames) {
      words.resize(f.data.size());
      for (std::size_t i = 0; i < f.data.size(); ++i) {
        words[i] = detail::to_le(std::bit_cast<std::uint32_t>(f.data[i]));
      }
      out.write(reinterpret_cast<const char*>(words.data()),
                static_cast<std::streamsize>(words.size() * 4));
    }
    if (!out) throw Error("short write to frames.f32");
  } else if (header.dtype == "pgm16") {
    detail::fit_quantization(frames, header);
    std::vector<std::uint16_t> q;
    for (std::size_t t = 0; t < frames.size(); ++t) {
      q.resize(frames[t].data.size());
      for (std::size_t i = 0; i < q.size(); ++i) {
        const double v = std::round((frames[t].data[i] - header.offset) / header.scale);
        q[i] = static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
      }
      write_pgm16(dir / frame_file_name(static_cast<int>(t)), header.width, header.height, q);
    }
  } else {
    throw Error("unknown dtype '" + header.dtype + "'");
  }
  std::ofstream meta(dir / "sequence.json");
  meta << to_json(header).dump(2) << "\n";
  if (!meta) throw Error("cannot write sequence.json");
  return header;
}

struct LoadedSequence {
  SequenceHeader header;
  std::vector<Frame> frames;
};

/// Reads a sequence directory (or the path of its sequence.json). Nothing is
/// returned unless the whole payload is present and well formed.
inline LoadedSequence read_sequence(const fs::path& path) {
  const fs::path dir = fs::is_directory(path) ? path : path.parent_path();
  const fs::path meta = fs::is_directory(path) ? path / "sequence.json" : path;
  std::ifstream in(meta);
  if (!in) throw Error("cannot open sequence header " + meta.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed sequence header: ") + e.what());
  }
  LoadedSequence seq;
  seq.header = header_from_json(j);
  const auto& h = seq.header;
  const std::size_t pixels = static_cast<std::size_t>(h.width) * h.height;

  if (h.dtype == "f32le") {
    const fs::path payload = dir / "frames.f32";
    std::ifstream f(payload, std::ios::binary);
    if (!f) throw Error("missing payload " + payload.string());
    const auto expected = static_cast<std::uintmax_t>(pixels) * h.frame_count * 4;
    const auto actual = fs::file_size(payload);
    if (actual < expected) {
      throw Error("truncated payload: expected " + std::to_string(expected) + " bytes, found " +
                  std::to_string(actual));
    }
    if (actual > expected) throw Error("payload larger than header declares");
    std::vector<std::uint32_t> words(pixels);
    std::vector<Frame> frames;
    for (int t = 0; t < h.frame_count; ++t) {
      f.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(pixels * 4));
      if (!f) throw Error("truncated payload");
      Frame fr(h.width, h.height, h.first_index + t);
      for (std::size_t i = 0; i < pixels; ++i) {
        fr.data[i] = std::bit_cast<float>(detail::to_le(words[i]));
      }
      frames.push_back(std::move(fr));
    }
    seq.frames = std::move(frames);
  } else {
    std::vector<Frame> frames;
    for (int t = 0; t < h.frame_count; ++t) {
      int w = 0, ht = 0;
      const auto q = read_pgm16(dir / frame_file_name(t), w, ht);
      if (w != h.width || ht != h.height) throw Error("PGM frame dimension mismatch");
      Frame fr(h.width, h.height, h.first_index + t);
      for (std::size_t i = 0; i < pixels; ++i) {
        fr.data[i] = static_cast<float>(q[i] * h.scale + h.offset);
      }
      frames.push_back(std::move(fr));
    }
    seq.frames = std::move(frames);
  }
  return seq;
}

// ---------------------------------------------------------------------------
// JSON records for parameters, simulation config and ground truth.

inline nlohmann::json to_json(const FilterParams& p) {
  return {{"kx", p.kx},
          {"ky", p.ky},
          {"kz", p.kz},
          {"bx", p.bx},
          {"by", p.by},
          {"mhat", {p.mhat[0], p.mhat[1], p.mhat[2]}},
          {"alpha", p.alpha},
          {"lag_grid_x", p.lag_grid_x},
          {"lag_grid_y", p.lag_grid_y}};
}

inline FilterParams params_from_json(const nlohmann::json& j) {
  FilterParams p;
  try {
    p.kx = j.at("kx").get<int>();
    p.ky = j.at("ky").get<int>();
    p.kz = j.at("kz").get<int>();
    p.bx = j.at("bx").get<int>();
    p.by = j.at("by").get<int>();
    const auto m = j.at("mhat").get<std::vector<int>>();
    if (m.size() != 3) throw Error("params: mhat needs three entries");
    p.mhat = {m[0], m[1], m[2]};
    p.alpha = j.at("alpha").get<double>();
    p.lag_grid_x = j.at("lag_grid_x").get<std::vector<double>>();
    p.lag_grid_y = j.at("lag_grid_y").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed params record: ") + e.what());
  }
  require_valid(p);
  return p;
}

inline nlohmann::json to_json(const SimConfig& c) {
  return {{"width", c.width},
          {"height", c.height},
          {"frame_count", c.frame_count},
          {"clutter_velocity", {c.clutter_velocity.x, c.clutter_velocity.y}},
          {"component_count", c.component_count},
          {"component_amplitude", c.component_amplitude},
          {"freq_range", {c.freq_min, c.freq_max}},
          {"dc_offset", c.dc_offset},
          {"target_enabled", c.target_enabled},
          {"target_velocity", {c.target_velocity.x, c.target_velocity.y}},
          {"target_peak", c.target_peak},
          {"psf_sigma", c.psf_sigma},
          {"target_truncation", c.target_truncation},
          {"noise_sigma", c.noise_sigma},
          {"rng_seed", c.rng_seed}};
}

inline nlohmann::json truth_to_json(const GroundTruth& t, const SimConfig& c) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& k : t.components) {
    comps.push_back({{"fx", k.fx}, {"fy", k.fy}, {"phase", k.phase}, {"amplitude", k.amplitude}});
  }
  nlohmann::json centers = nlohmann::json::array();
  for (const auto& v : t.target_centers) centers.push_back({v.x, v.y});
  return {{"config", to_json(c)},
          {"seed", t.seed},
          {"clutter_velocity", {t.clutter_velocity.x, t.clutter_velocity.y}},
          {"target_enabled", t.target_enabled},
          {"target_radius", c.target_enabled ? target_radius(c) : 0.0},
          {"components", comps},
          {"target_centers", centers}};
}

struct TruthRecord {
  GroundTruth truth;
  double target_radius = 0.0;
};

inline TruthRecord truth_from_json(const nlohmann::json& j) {
  TruthRecord r;
  try {
    r.truth.seed = j.at("seed").get<std::uint64_t>();
    const auto cv = j.at("clutter_velocity").get<std::vector<double>>();
    if (cv.size() != 2) throw Error("truth: clutter_velocity needs two entries");
    r.truth.clutter_velocity = {cv[0], cv[1]};
    r.truth.target_enabled = j.at("target_enabled").get<bool>();
    r.target_radius = j.value("target_radius", 0.0);
    for (const auto& k : j.at("components")) {
      r.truth.components.push_back({k.at("fx").get<double>(), k.at("fy").get<double>(),
                                    k.at("phase").get<double>(), k.at("amplitude").get<double>()});
    }
    for (const auto& c : j.at("target_centers")) {
      r.truth.target_centers.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed ground-truth record: ") + e.what());
  }
  return r;
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f << j.dump(2) << "\n";
  if (!f) throw Error("short write to " + path.string());
}

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace whiten
