#pragma once

// Throughput harness. Every strategy sees the same simulated input; per-stage
// times come from the pipeline's own stage clocks, the whole-pipeline time
// from wrapping process_frame. Warm-up frames and bank construction are never
// timed.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "whiten/core.hpp"
#include "whiten/pipeline.hpp"
#include "whiten/scenegen.hpp"

namespace whiten {

enum class BenchStage { spectrum, conditioning, autocorr, filtering, pipeline };

inline const char* stage_name(BenchStage s) {
  switch (s) {
    case BenchStage::spectrum: return "spectrum";
    case BenchStage::conditioning: return "conditioning";
    case BenchStage::autocorr: return "autocorr";
    case BenchStage::filtering: return "filtering";
    case BenchStage::pipeline: return "pipeline";
  }
  return "?";
}

inline BenchStage parse_stage(const std::string& s) {
  for (auto st : {BenchStage::spectrum, BenchStage::conditioning, BenchStage::autocorr,
                  BenchStage::filtering, BenchStage::pipeline}) {
    if (s == stage_name(st)) return st;
  }
  throw Error("unknown bench stage '" + s + "'");
}

struct BenchStrategy {
  SpectrumBackend backend = SpectrumBackend::recursive;
  Strategy exec = Strategy::serial();

  std::string name() const {
    const char* b = backend == SpectrumBackend::naive ? "naive" : "recursive";
    return std::string(b) + (exec.kind == Strategy::Kind::serial ? "-serial" : "-parallel");
  }
  unsigned workers() const { return exec.workers; }
  std::string label() const { return name() + "(" + std::to_string(workers()) + ")"; }

  static BenchStrategy naive_serial() { return {SpectrumBackend::naive, Strategy::serial()}; }
  static BenchStrategy recursive_serial() { return {SpectrumBackend::recursive, Strategy::serial()}; }
  static BenchStrategy recursive_parallel(unsigned w) {
    return {SpectrumBackend::recursive, Strategy::parallel(w)};
  }
};

struct BenchConfig {
  int width = 64;
  int height = 64;
  int frame_count = 20;
  int repetitions = 3;
  std::uint64_t seed = 1;
  unsigned max_workers = 64;
  FilterParams params = default_params();
  std::vector<BenchStrategy> strategies = {BenchStrategy::naive_serial(),
                                           BenchStrategy::recursive_serial(),
                                           BenchStrategy::recursive_parallel(4)};
  std::vector<BenchStage> stages = {BenchStage::spectrum, BenchStage::conditioning,
                                    BenchStage::autocorr, BenchStage::filtering,
                                    BenchStage::pipeline};
  BenchStrategy baseline = BenchStrategy::recursive_serial();
};

inline void validate(const BenchConfig& c) {
  require_valid(c.params);
  if (c.repetitions < 3) throw Error("bench: repetitions must be at least 3");
  if (c.frame_count < 2 * c.params.mz()) {
    throw Error("bench: frame count must be at least " + std::to_string(2 * c.params.mz()));
  }
  if (c.strategies.empty()) throw Error("bench: no strategies requested");
  if (c.stages.empty()) throw Error("bench: no stages requested");
}

struct BenchRow {
  BenchStage stage = BenchStage::pipeline;
  std::string strategy;
  unsigned workers = 1;
  double fps_median = 0.0;
  double fps_min = 0.0;
  double fps_max = 0.0;
  double speedup = 0.0;  // fps_median / baseline fps_median for the same stage
};

struct EquivalenceReport {
  bool ok = true;
  double worst_spectrum_error = 0.0;  // relative to the pixel's peak |S|
  std::string detail;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::vector<std::string> skipped;  // strategies that could not run
  EquivalenceReport equivalence;
  unsigned cores = 0;
  std::string baseline;
  std::string environment() const {
    return "hardware_concurrency=" + std::to_string(cores);
  }
  const BenchRow* find(BenchStage st, const std::string& strategy, unsigned workers) const {
    for (const auto& r : rows)
      if (r.stage == st && r.strategy == strategy && r.workers == workers) return &r;
    return nullptr;
  }
};

/// Everything a run produced that equivalence checks look at.
struct RunCapture {
  std::vector<Frame> residuals;
  std::vector<Frame> predictions;
  std::vector<VelocityField> velocities;
  std::vector<SpectrumField> spectra;
};

/// Worst per-bin error between two spectra, relative to each pixel's peak
/// magnitude in `ref`.
inline EquivalenceReport compare_spectra(const SpectrumField& ref, const SpectrumField& test,
                                         double tolerance) {
  EquivalenceReport rep;
  if (ref.width != test.width || ref.height != test.height || ref.bins != test.bins) {
    rep.ok = false;
    rep.detail = "spectrum field shapes differ";
    return rep;
  }
  int wx = -1, wy = -1, wb = -1;
  for (int y = ref.first_y; y < ref.height; ++y)
    for (int x = ref.first_x; x < ref.width; ++x) {
      auto a = ref.at(x, y);
      auto b = test.at(x, y);
      double peak = 0.0;
      for (const auto& v : a) peak = std::max(peak, static_cast<double>(std::abs(v)));
      peak = std::max(peak, 1e-30);
      for (int k = 0; k < ref.bins; ++k) {
        const double e = std::abs(cdouble(a[k]) - cdouble(b[k])) / peak;
        if (e > rep.worst_spectrum_error) {
          rep.worst_spectrum_error = e;
          wx = x;
          wy = y;
          wb = k;
        }
      }
    }
  if (rep.worst_spectrum_error > tolerance) {
    rep.ok = false;
    std::ostringstream os;
    os << "spectrum mismatch at pixel (" << wx << "," << wy << ") bin " << wb
       << ": relative error " << rep.worst_spectrum_error;
    rep.detail = os.str();
  }
  return rep;
}

inline std::optional<std::string> first_difference(const std::vector<Frame>& a,
                                                   const std::vector<Frame>& b,
                                                   const char* what) {
  if (a.size() != b.size()) return std::string(what) + ": output counts differ";
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t i = 0; i < a[t].data.size(); ++i)
      if (std::bit_cast<std::uint32_t>(a[t].data[i]) != std::bit_cast<std::uint32_t>(b[t].data[i])) {
        std::ostringstream os;
        os << what << " differ at frame " << a[t].index << " pixel " << i << ": " << a[t].data[i]
           << " vs " << b[t].data[i];
        return os.str();
      }
  return std::nullopt;
}

inline std::optional<std::string> first_difference(const std::vector<VelocityField>& a,
                                                   const std::vector<VelocityField>& b) {
  if (a.size() != b.size()) return std::string("velocity: output counts differ");
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t i = 0; i < a[t].index.size(); ++i)
      if (a[t].index[i].ix != b[t].index[i].ix || a[t].index[i].iy != b[t].index[i].iy) {
        return "velocity fields differ at output " + std::to_string(t) + " pixel " +
               std::to_string(i);
      }
  return std::nullopt;
}

/// Naive vs recursive spectra within `tolerance`; runs that share a spectrum
/// backend must agree bit for bit.
inline EquivalenceReport verify_equivalence(const std::vector<BenchStrategy>& strategies,
                                            const std::vector<RunCapture>& runs,
                                            double tolerance = 1e-4) {
  EquivalenceReport rep;
  if (runs.size() < 2) return rep;
  for (std::size_t i = 1; i < runs.size(); ++i) {
    const auto& a = runs[0];
    const auto& b = runs[i];
    if (a.spectra.size() != b.spectra.size()) {
      rep.ok = false;
      rep.detail = "runs produced different frame counts";
      return rep;
    }
    if (strategies[0].backend != strategies[i].backend) {
      for (std::size_t t = 0; t < a.spectra.size(); ++t) {
        auto r = compare_spectra(a.spectra[t], b.spectra[t], tolerance);
        rep.worst_spectrum_error = std::max(rep.worst_spectrum_error, r.worst_spectrum_error);
        if (!r.ok) {
          rep.ok = false;
          rep.detail = strategies[0].label() + " vs " + strategies[i].label() + ": " + r.detail;
          return rep;
        }
      }
    }
  }
  // Bit-identity among runs with equal backends.
  for (std::size_t i = 0; i < runs.size(); ++i)
    for (std::size_t j = i + 1; j < runs.size(); ++j) {
      if (strategies[i].backend != strategies[j].backend) continue;
      std::optional<std::string> d = first_difference(runs[i].residuals, runs[j].residuals, "residuals");
      if (!d) d = first_difference(runs[i].predictions, runs[j].predictions, "predictions");
      if (!d) d = first_difference(runs[i].velocities, runs[j].velocities);
      if (d) {
        rep.ok = false;
        rep.detail = strategies[i].label() + " vs " + strategies[j].label() + ": " + *d;
        return rep;
      }
    }
  return rep;
}

namespace detail {

inline constexpr std::size_t kSpectrumCaptureFrames = 3;

struct RepTiming {
  std::map<BenchStage, double> seconds;
  int frames = 0;
};

inline RepTiming run_once(const BenchConfig& cfg, const BenchStrategy& st,
                          const std::vector<Frame>& frames, RunCapture* capture) {
  Pipeline pipe(cfg.params, cfg.width, cfg.height, st.exec, st.backend);
  RepTiming t;
  for (BenchStage s : {BenchStage::spectrum, BenchStage::conditioning, BenchStage::autocorr,
                       BenchStage::filtering, BenchStage::pipeline}) {
    t.seconds[s] = 0.0;
  }
  for (const auto& f : frames) {
    const auto start = std::chrono::steady_clock::now();
    auto out = pipe.process_frame(f);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!out) continue;  // warm-up
    const auto& st_t = pipe.last_timings();
    t.seconds[BenchStage::spectrum] += st_t.spectrum;
    t.seconds[BenchStage::conditioning] += st_t.conditioning;
    t.seconds[BenchStage::autocorr] += st_t.autocorr;
    t.seconds[BenchStage::filtering] += st_t.filtering;
    t.seconds[BenchStage::pipeline] += wall;
    ++t.frames;
    if (capture) {
      capture->residuals.push_back(std::move(out->residual));
      capture->predictions.push_back(std::move(out->prediction));
      capture->velocities.push_back(std::move(out->velocity));
      // Full spectra are large; the last few frames are enough to compare backends.
      capture->spectra.push_back(pipe.last_spectrum());
      if (capture->spectra.size() > kSpectrumCaptureFrames) capture->spectra.erase(capture->spectra.begin());
    }
  }
  return t;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

inline std::vector<Frame> bench_input(const BenchConfig& cfg) {
  SimConfig sim;
  sim.width = cfg.width;
  sim.height = cfg.height;
  sim.frame_count = cfg.frame_count;
  sim.rng_seed = cfg.seed;
  return generate(sim).frames;
}

/// Runs the requested strategies, checks equivalence on the first repetition
/// and only then fills in rates. A failed check leaves `rows` empty.
inline BenchReport run_bench(const BenchConfig& cfg) {
  validate(cfg);
  BenchReport report;
  report.cores = std::thread::hardware_concurrency();
  report.baseline = cfg.baseline.label();
  const auto frames = bench_input(cfg);

  std::vector<BenchStrategy> ran;
  std::vector<RunCapture> captures;
  std::vector<std::vector<detail::RepTiming>> timings;
  std::vector<BenchStrategy> order = cfg.strategies;
  const bool has_baseline = std::any_of(order.begin(), order.end(), [&](const BenchStrategy& s) {
    return s.label() == cfg.baseline.label();
  });
  if (!has_baseline) order.insert(order.begin(), cfg.baseline);

  for (const auto& st : order) {
    if (st.workers() > cfg.max_workers) {
      report.skipped.push_back(st.label() + ": worker count exceeds maximum of " +
                               std::to_string(cfg.max_workers));
      continue;
    }
    RunCapture cap;
    std::vector<detail::RepTiming> reps;
    for (int r = 0; r < cfg.repetitions; ++r) {
      reps.push_back(detail::run_once(cfg, st, frames, r == 0 ? &cap : nullptr));
    }
    ran.push_back(st);
    captures.push_back(std::move(cap));
    timings.push_back(std::move(reps));
  }

  report.equivalence = verify_equivalence(ran, captures);
  if (!report.equivalence.ok) return report;

  std::map<BenchStage, double> base_rate;
  std::vector<BenchRow> rows;
  for (std::size_t i = 0; i < ran.size(); ++i)
    for (BenchStage s : cfg.stages) {
      std::vector<double> fps;
      for (const auto& rep : timings[i]) {
        const double sec = std::max(rep.seconds.at(s), 1e-12);
        fps.push_back(rep.frames / sec);
      }
      BenchRow row;
      row.stage = s;
      row.strategy = ran[i].name();
      row.workers = ran[i].workers();
      row.fps_median = detail::median(fps);
      row.fps_min = *std::min_element(fps.begin(), fps.end());
      row.fps_max = *std::max_element(fps.begin(), fps.end());
      if (ran[i].label() == cfg.baseline.label()) base_rate[s] = row.fps_median;
      rows.push_back(row);
    }
  for (auto& r : rows) {
    auto it = base_rate.find(r.stage);
    r.speedup = it != base_rate.end() ? r.fps_median / it->second : 0.0;
  }
  // Drop the implicit baseline if it was not requested.
  if (!has_baseline) {
    std::erase_if(rows, [&](const BenchRow& r) {
      return r.strategy == cfg.baseline.name() && r.workers == cfg.baseline.workers();
    });
  }
  report.rows = std::move(rows);
  return report;
}

inline const char* bench_csv_header() {
  return "stage,strategy,workers,fps_median,fps_min,fps_max,speedup_vs_baseline";
}

inline void write_bench_csv(std::ostream& os, const BenchReport& r) {
  os << bench_csv_header() << "\n";
  for (const auto& row : r.rows) {
    os << stage_name(row.stage) << ',' << row.strategy << ',' << row.workers << ','
       << row.fps_median << ',' << row.fps_min << ',' << row.fps_max << ',' << row.speedup << "\n";
  }
}

inline void write_bench_markdown(std::ostream& os, const BenchReport& r) {
  os << "| stage | strategy | workers | fps (median) | fps (min) | fps (max) | speedup vs "
     << r.baseline << " |\n|---|---|---|---|---|---|---|\n";
  for (const auto& row : r.rows) {
    os << "| " << stage_name(row.stage) << " | " << row.strategy << " | " << row.workers << " | "
       << row.fps_median << " | " << row.fps_min << " | " << row.fps_max << " | " << row.speedup
       << " |\n";
  }
  os << "\n" << r.environment() << "\n";
  for (const auto& s : r.skipped) os << "skipped: " << s << "\n";
  if (!r.equivalence.ok) os << "equivalence FAILED: " << r.equivalence.detail << "\n";
}

}  // namespace whiten
