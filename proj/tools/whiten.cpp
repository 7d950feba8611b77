// whiten: command-line front end.
//
//   whiten simulate --out DIR [--frames N] [--seed S] ...
//   whiten filter   --in DIR --out DIR [--params FILE] [--strategy serial|parallel] ...
//   whiten flow     --in DIR --out PATH [--format csv|f32]
//   whiten design   --velocity VX,VY [--out DIR]
//   whiten bench    [--out FILE]

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "whiten/whiten.hpp"

namespace {

using namespace whiten;

constexpr int kUsageError = 2;

Velocity parse_pair(const std::string& text, const char* what) {
  std::istringstream is(text);
  std::string a, b;
  if (!std::getline(is, a, ',') || !std::getline(is, b) || a.empty() || b.empty()) {
    throw Error(std::string(what) + ": expected two comma-separated numbers, got '" + text + "'");
  }
  try {
    std::size_t ia = 0, ib = 0;
    const double x = std::stod(a, &ia);
    const double y = std::stod(b, &ib);
    if (ia != a.size() || ib != b.size()) throw std::invalid_argument("trailing");
    return {x, y};
  } catch (const std::exception&) {
    throw Error(std::string(what) + ": expected two comma-separated numbers, got '" + text + "'");
  }
}

Strategy make_strategy(const std::string& kind, unsigned workers) {
  if (kind == "serial") return Strategy::serial();
  if (kind == "parallel") return Strategy::parallel(workers);
  throw Error("unknown strategy '" + kind + "'");
}

FilterParams params_or_default(const std::string& path) {
  return path.empty() ? default_params() : load_params(path);
}

nlohmann::json run_header(const std::string& command) {
  return {{"tool", "whiten"}, {"version", kVersion}, {"command", command}};
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string out;
  std::string format = "f32le";
  SimConfig cfg;
  std::string clutter, target;
  bool no_target = false;
};

int run_simulate(SimulateArgs a) {
  if (!a.clutter.empty()) a.cfg.clutter_velocity = parse_pair(a.clutter, "--clutter-velocity");
  if (!a.target.empty()) a.cfg.target_velocity = parse_pair(a.target, "--target-velocity");
  if (a.no_target) a.cfg.target_enabled = false;
  validate(a.cfg);
  const auto seq = generate(a.cfg);

  SequenceHeader h;
  h.dtype = a.format;
  h.source = {{"generator", "simulate"}, {"seed", a.cfg.rng_seed}, {"config", to_json(a.cfg)},
              {"version", kVersion}};
  write_sequence(seq.frames, h, a.out);
  write_json(fs::path(a.out) / "truth.json", truth_to_json(seq.truth, a.cfg));
  std::cerr << "wrote " << seq.frames.size() << " frames to " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct FilterArgs {
  std::string in, out, params, metrics, truth;
  std::string strategy = "serial";
  unsigned workers = 4;
  std::string format = "f32le";
  bool emit_prediction = false;
  bool emit_velocity = false;
};

std::optional<TruthRecord> load_truth(const std::string& explicit_path, const std::string& in) {
  fs::path p = explicit_path;
  if (p.empty()) {
    const fs::path dir = fs::is_directory(in) ? fs::path(in) : fs::path(in).parent_path();
    p = dir / "truth.json";
    if (!fs::exists(p)) return std::nullopt;
  }
  return truth_from_json(read_json(p));
}

void write_velocity_csv(std::ostream& os, const std::vector<VelocityField>& fields,
                        const std::vector<std::int64_t>& indices) {
  os << "frame,x,y,vx,vy\n";
  for (std::size_t t = 0; t < fields.size(); ++t) {
    const auto& f = fields[t];
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x) {
        if (!f.mask.at(x, y)) continue;
        const Velocity v = f.at(x, y);
        os << indices[t] << ',' << x << ',' << y << ',' << v.x << ',' << v.y << '\n';
      }
  }
}

/// Two channels (vx, vy) per pixel, row-major, frames back to back, f32le.
/// Invalid pixels hold NaN.
void write_velocity_f32(const fs::path& path, const std::vector<VelocityField>& fields,
                        const std::vector<std::int64_t>& indices) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  const float nan = std::numeric_limits<float>::quiet_NaN();
  for (const auto& field : fields) {
    for (int y = 0; y < field.height; ++y)
      for (int x = 0; x < field.width; ++x) {
        float v[2] = {nan, nan};
        if (field.mask.at(x, y)) {
          v[0] = static_cast<float>(field.at(x, y).x);
          v[1] = static_cast<float>(field.at(x, y).y);
        }
        f.write(reinterpret_cast<const char*>(v), sizeof v);
      }
  }
  if (!f) throw Error("short write to " + path.string());
  nlohmann::json meta = {{"width", fields.empty() ? 0 : fields.front().width},
                         {"height", fields.empty() ? 0 : fields.front().height},
                         {"frame_count", fields.size()},
                         {"channels", {"vx", "vy"}},
                         {"dtype", "f32le"},
                         {"frame_indices", indices}};
  write_json(fs::path(path).replace_extension(".json"), meta);
}

int run_filter(const FilterArgs& a) {
  const FilterParams p = params_or_default(a.params);
  const auto seq = read_sequence(a.in);
  const auto truth = load_truth(a.truth, a.in);
  const Strategy strategy = make_strategy(a.strategy, a.workers);

  Pipeline pipe(p, seq.header.width, seq.header.height, strategy);
  std::vector<Frame> residuals, predictions;
  std::vector<VelocityField> velocities;
  std::vector<std::int64_t> indices;
  std::ofstream metrics;
  if (!a.metrics.empty()) {
    metrics.open(a.metrics);
    if (!metrics) throw Error("cannot write " + a.metrics);
    metrics << metrics_csv_header() << "\n";
  }

  const auto start = std::chrono::steady_clock::now();
  for (const auto& frame : seq.frames) {
    auto out = pipe.process_frame(frame);
    if (!out) continue;
    if (metrics.is_open()) {
      MetricsInput mi;
      mi.residual = &out->residual;
      mi.mask = &out->mask;
      mi.velocity = &out->velocity;
      if (truth) {
        const auto t = out->frame_index - seq.header.first_index;
        if (truth->truth.target_enabled && t >= 0 &&
            t < static_cast<std::int64_t>(truth->truth.target_centers.size())) {
          mi.target = truth->truth.target_centers[static_cast<std::size_t>(t)];
          mi.exclusion_radius = truth->target_radius;
        }
        mi.true_velocity = truth->truth.clutter_velocity;
      }
      write_metrics_row(metrics, compute_metrics(mi));
    }
    indices.push_back(out->frame_index);
    residuals.push_back(std::move(out->residual));
    if (a.emit_prediction) predictions.push_back(std::move(out->prediction));
    if (a.emit_velocity) velocities.push_back(std::move(out->velocity));
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const fs::path out = a.out;
  fs::create_directories(out);
  SequenceHeader h;
  h.dtype = a.format;
  h.source = {{"generator", "filter"}, {"input", a.in}, {"version", kVersion}};
  write_sequence(residuals, h, out / "residual");
  if (a.emit_prediction) write_sequence(predictions, h, out / "prediction");
  if (a.emit_velocity) write_velocity_f32(out / "velocity.f32", velocities, indices);

  nlohmann::json run = run_header("filter");
  run["input"] = a.in;
  run["input_source"] = seq.header.source;
  if (seq.header.source.contains("seed")) run["seed"] = seq.header.source["seed"];
  run["params"] = to_json(p);
  run["strategy"] = strategy.name();
  run["valid_region"] = {{"x0", pipe.valid_x0()}, {"x1", pipe.valid_x1()},
                         {"y0", pipe.valid_y0()}, {"y1", pipe.valid_y1()}};
  run["latency_frames"] = p.mhat[2];
  run["warmup_frames"] = p.mz() - 1;
  run["input_frames"] = seq.frames.size();
  run["output_frames"] = residuals.size();
  run["bank_build_seconds"] = pipe.bank().build_seconds();
  run["processing_seconds"] = seconds;
  write_json(out / "run.json", run);
  std::cerr << "filtered " << seq.frames.size() << " frames, " << residuals.size()
            << " outputs in " << seconds << " s\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct FlowArgs {
  std::string in, out, params;
  std::string format = "csv";
  std::string strategy = "serial";
  unsigned workers = 4;
};

int run_flow(const FlowArgs& a) {
  const FilterParams p = params_or_default(a.params);
  const auto seq = read_sequence(a.in);
  const Strategy strategy = make_strategy(a.strategy, a.workers);
  Executor exec(strategy);
  SpectrumStream spectrum(p, seq.header.width, seq.header.height);
  FlowEstimator flow(p, seq.header.width, seq.header.height);

  std::vector<VelocityField> fields;
  std::vector<std::int64_t> indices;
  for (const auto& frame : seq.frames) {
    const auto& s = spectrum.push_frame(frame, exec);
    if (!s.ready) continue;
    fields.push_back(flow.update(s, exec));
    indices.push_back(frame.index);
  }

  if (a.format == "csv") {
    std::ofstream f(a.out);
    if (!f) throw Error("cannot write " + a.out);
    write_velocity_csv(f, fields, indices);
  } else if (a.format == "f32") {
    write_velocity_f32(a.out, fields, indices);
  } else {
    throw Error("unknown flow format '" + a.format + "'");
  }
  nlohmann::json run = run_header("flow");
  run["input"] = a.in;
  run["input_source"] = seq.header.source;
  run["params"] = to_json(p);
  run["strategy"] = strategy.name();
  run["note"] = "velocities are reported at window-anchor pixels";
  write_json(fs::path(a.out).replace_extension(".run.json"), run);
  return 0;
}

// ---------------------------------------------------------------------------

struct DesignArgs {
  std::string velocity, out, params;
  int grid = 64;
  std::optional<double> fz;
};

int run_design(const DesignArgs& a) {
  const FilterParams p = params_or_default(a.params);
  const Velocity v = parse_pair(a.velocity, "--velocity");
  const auto taps = sample_kernel(p, v);
  auto write_taps = [&](std::ostream& os) {
    os << std::setprecision(10) << "mx,my,mz,tap\n";
    for (int mz = 0; mz < p.mz(); ++mz)
      for (int my = 0; my < p.my(); ++my)
        for (int mx = 0; mx < p.mx(); ++mx)
          os << mx << ',' << my << ',' << mz << ',' << taps.taps[p.sample_index(mx, my, mz)] << '\n';
  };
  if (a.out.empty()) {
    write_taps(std::cout);
    return 0;
  }
  if (a.grid < 2) throw Error("--grid must be at least 2");
  const fs::path dir = a.out;
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "taps.csv");
    write_taps(f);
  }
  {
    const auto h = kernel_to_freq(taps, p);
    std::ofstream f(dir / "coeffs.csv");
    f << std::setprecision(10) << "kx,ky,kz,re,im,abs\n";
    for (int bz = -p.kz; bz <= p.kz; ++bz)
      for (int by = -p.by; by <= p.by; ++by)
        for (int bx = -p.bx; bx <= p.bx; ++bx) {
          const cfloat c = h.coeffs[p.retained_index(bx, by, bz)];
          f << bx << ',' << by << ',' << bz << ',' << c.real() << ',' << c.imag() << ','
            << std::abs(c) << '\n';
        }
  }
  {
    // Without --fz the grid follows the motion plane fz = -(vx fx + vy fy).
    std::ofstream f(dir / "response.csv");
    f << std::setprecision(10) << "fx,fy,fz,abs_q\n";
    for (int iy = 0; iy < a.grid; ++iy)
      for (int ix = 0; ix < a.grid; ++ix) {
        const double fx = -0.5 + static_cast<double>(ix) / a.grid;
        const double fy = -0.5 + static_cast<double>(iy) / a.grid;
        const double fz = a.fz ? *a.fz : -(v.x * fx + v.y * fy);
        f << fx << ',' << fy << ',' << fz << ',' << std::abs(freq_response(p, v, {fx, fy, fz}))
          << '\n';
      }
  }
  nlohmann::json run = run_header("design");
  run["velocity"] = {v.x, v.y};
  run["params"] = to_json(p);
  write_json(dir / "design.json", run);
  return 0;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string out, params;
  int frames = 20;
  int repetitions = 3;
  int size = 64;
  std::uint64_t seed = 1;
  std::vector<unsigned> workers = {4};
  std::vector<std::string> strategies = {"naive-serial", "recursive-serial", "recursive-parallel"};
  std::vector<std::string> stages;
  bool quiet = false;
};

int run_bench_cmd(const BenchArgs& a) {
  BenchConfig cfg;
  cfg.width = cfg.height = a.size;
  cfg.frame_count = a.frames;
  cfg.repetitions = a.repetitions;
  cfg.seed = a.seed;
  cfg.params = params_or_default(a.params);
  cfg.strategies.clear();
  for (const auto& s : a.strategies) {
    if (s == "naive-serial") {
      cfg.strategies.push_back(BenchStrategy::naive_serial());
    } else if (s == "recursive-serial") {
      cfg.strategies.push_back(BenchStrategy::recursive_serial());
    } else if (s == "recursive-parallel") {
      for (unsigned w : a.workers) {
        if (w == 0) throw Error("--workers entries must be positive");
        cfg.strategies.push_back(BenchStrategy::recursive_parallel(w));
      }
    } else {
      throw Error("unknown bench strategy '" + s + "'");
    }
  }
  if (!a.stages.empty()) {
    cfg.stages.clear();
    for (const auto& s : a.stages) cfg.stages.push_back(parse_stage(s));
  }
  const auto report = run_bench(cfg);
  if (!report.equivalence.ok) {
    std::cerr << "error: outputs differ across strategies: " << report.equivalence.detail << "\n";
    return 1;
  }
  if (!a.out.empty()) {
    std::ofstream f(a.out);
    if (!f) throw Error("cannot write " + a.out);
    write_bench_csv(f, report);
    nlohmann::json run = run_header("bench");
    run["params"] = to_json(cfg.params);
    run["seed"] = cfg.seed;
    run["frames"] = cfg.frame_count;
    run["repetitions"] = cfg.repetitions;
    run["environment"] = report.environment();
    run["worst_spectrum_error"] = report.equivalence.worst_spectrum_error;
    run["skipped"] = report.skipped;
    write_json(fs::path(a.out).replace_extension(".json"), run);
  }
  if (!a.quiet) write_bench_markdown(std::cout, report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Velocity-tuned clutter whitening for image sequences"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic cluttered sequence");
  simulate->add_option("--out", sim.out, "Output sequence directory")->required();
  simulate->add_option("--frames", sim.cfg.frame_count, "Number of frames");
  simulate->add_option("--seed", sim.cfg.rng_seed, "Generator seed");
  simulate->add_option("--width", sim.cfg.width);
  simulate->add_option("--height", sim.cfg.height);
  simulate->add_option("--components", sim.cfg.component_count);
  simulate->add_option("--amplitude", sim.cfg.component_amplitude);
  simulate->add_option("--dc", sim.cfg.dc_offset);
  simulate->add_option("--noise", sim.cfg.noise_sigma, "Noise standard deviation");
  simulate->add_option("--clutter-velocity", sim.clutter, "vx,vy in pixels/frame");
  simulate->add_option("--target-velocity", sim.target, "vx,vy in pixels/frame");
  simulate->add_option("--target-peak", sim.cfg.target_peak);
  simulate->add_flag("--no-target", sim.no_target);
  simulate->add_option("--format", sim.format)->check(CLI::IsMember({"f32le", "pgm16"}));

  FilterArgs fil;
  auto* filter = app.add_subcommand("filter", "Whiten a sequence");
  filter->add_option("--in", fil.in, "Input sequence directory")->required();
  filter->add_option("--out", fil.out, "Output directory")->required();
  filter->add_option("--params", fil.params, "Parameter file");
  filter->add_option("--strategy", fil.strategy)->check(CLI::IsMember({"serial", "parallel"}));
  filter->add_option("--workers", fil.workers, "Worker count for --strategy parallel");
  filter->add_flag("--emit-prediction", fil.emit_prediction);
  filter->add_flag("--emit-velocity", fil.emit_velocity);
  filter->add_option("--metrics", fil.metrics, "Per-frame metrics CSV");
  filter->add_option("--truth", fil.truth, "Ground-truth JSON (default: <in>/truth.json)");
  filter->add_option("--format", fil.format)->check(CLI::IsMember({"f32le", "pgm16"}));

  FlowArgs flo;
  auto* flow = app.add_subcommand("flow", "Estimate background velocity fields only");
  flow->add_option("--in", flo.in)->required();
  flow->add_option("--out", flo.out, "Output file")->required();
  flow->add_option("--params", flo.params);
  flow->add_option("--format", flo.format)->check(CLI::IsMember({"csv", "f32"}));
  flow->add_option("--strategy", flo.strategy)->check(CLI::IsMember({"serial", "parallel"}));
  flow->add_option("--workers", flo.workers);

  DesignArgs des;
  auto* design = app.add_subcommand("design", "Dump a predictor's taps, coefficients and response");
  design->add_option("--velocity", des.velocity, "vx,vy")->required();
  design->add_option("--out", des.out, "Directory for taps.csv, coeffs.csv, response.csv");
  design->add_option("--params", des.params);
  design->add_option("--grid", des.grid, "Response grid points per axis");
  design->add_option("--fz", des.fz, "Temporal frequency of the response grid");

  BenchArgs ben;
  auto* bench = app.add_subcommand("bench", "Measure throughput across strategies");
  bench->add_option("--out", ben.out, "CSV report");
  bench->add_option("--frames", ben.frames);
  bench->add_option("--repetitions", ben.repetitions);
  bench->add_option("--size", ben.size, "Square image size");
  bench->add_option("--seed", ben.seed);
  bench->add_option("--params", ben.params);
  bench->add_option("--workers", ben.workers, "Worker counts for recursive-parallel");
  bench->add_option("--strategies", ben.strategies);
  bench->add_option("--stages", ben.stages);
  bench->add_flag("--quiet", ben.quiet, "Skip the Markdown table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsageError;
  }

  try {
    if (*simulate) return run_simulate(sim);
    if (*filter) return run_filter(fil);
    if (*flow) return run_flow(flo);
    if (*design) return run_design(des);
    if (*bench) return run_bench_cmd(ben);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kUsageError;
}
