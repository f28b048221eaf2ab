// Command-line front end: reachability sweep, safe-set construction, single
// runs and the benchmark suite.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "simplex_track/config.hpp"

namespace fs = std::filesystem;
using namespace simplex_track;

namespace
{

#ifndef SIMPLEX_TRACK_DATA_DIR
#define SIMPLEX_TRACK_DATA_DIR "data"
#endif

constexpr const char *kConfigEnv = "SIMPLEX_TRACK_CONFIG";

struct Globals
{
  std::string config_file;
  bool quick{false};
  std::optional<unsigned> workers;
  std::string out_dir;
};

std::string utc_timestamp()
{
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

AppConfig resolve_config(const Globals &g)
{
  AppConfig cfg;
  if (g.quick) {
    cfg.sweep = SweepConfig::quick();
  }
  std::string file = g.config_file;
  if (file.empty()) {
    if (const char *env = std::getenv(kConfigEnv)) {
      file = env;
    }
  }
  if (!file.empty()) {
    cfg = load_config_file(file, cfg);
  }
  if (g.workers) {
    cfg.workers = *g.workers;
  }
  if (!g.out_dir.empty()) {
    cfg.output_dir = g.out_dir;
  }
  cfg.validate();
  return cfg;
}

// Relative safe-set paths fall back to the installed data directory.
std::string locate_safe_set(const std::string &file)
{
  if (fs::exists(file) || fs::path(file).is_absolute()) {
    return file;
  }
  const fs::path fallback = fs::path(SIMPLEX_TRACK_DATA_DIR) / fs::path(file).filename();
  return fs::exists(fallback) ? fallback.string() : file;
}

std::shared_ptr<const SafeSet> load_safe_set(const AppConfig &cfg)
{
  const std::string file = locate_safe_set(cfg.safe_set_file);
  return std::make_shared<const SafeSet>(SafeSet::load(file));
}

fs::path prepare_out_dir(const AppConfig &cfg)
{
  fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  return dir;
}

// Run metadata goes to a sidecar so the data files stay byte-reproducible.
void write_sidecar(const fs::path &data_file, const std::string &command, const AppConfig &cfg)
{
  nlohmann::json meta{{"command", command},
                      {"created_utc", utc_timestamp()},
                      {"data_file", data_file.filename().string()},
                      {"config", config_to_json(cfg)}};
  std::ofstream out(data_file.string() + ".meta.json");
  out << meta.dump(2) << "\n";
}

std::ofstream open_out(const fs::path &file)
{
  std::ofstream out(file);
  if (!out) {
    throw std::runtime_error("cannot write " + file.string());
  }
  return out;
}

std::vector<SweepRecord> load_records(const std::string &file, const SweepConfig &sweep)
{
  std::ifstream in(file);
  if (!in) {
    throw std::runtime_error("cannot open records file " + file);
  }
  return read_records_csv(in, sweep);
}

void print_summary(const SafeSet &set, const SafeSetSummary &s)
{
  std::printf("grid cells      %zu\n", s.grid_cells);
  std::printf("roa cells       %zu\n", s.roa_cells);
  std::printf("safe cells      %zu\n", s.safe_cells);
  std::printf("retained cells  %zu\n", s.retained_cells);
  std::printf("shrunk cells    %zu\n", s.shrunk_cells);
  std::printf("set_max_d       %.4f m\n", set.set_max_d());
  std::printf("shrunk_max_d    %.4f m\n", set.shrunk_max_d());
  std::printf("dwell_time      %.2f s\n", set.dwell_time());
}

int cmd_sweep(const Globals &g, const std::string &records_name, const std::string &set_name)
{
  const AppConfig cfg = resolve_config(g);
  const fs::path dir = prepare_out_dir(cfg);
  const PurePursuit pp(cfg.pure_pursuit, cfg.limits);
  std::fprintf(stderr, "sweeping %zu simulations (worker threads: %u)\n", cfg.sweep.record_count(),
               resolve_workers(cfg.workers));
  const auto t0 = std::chrono::steady_clock::now();
  const auto records = run_sweep(cfg.sweep, pp, cfg.workers);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::fprintf(stderr, "sweep finished in %.1f s\n", secs);

  const fs::path rec_file = dir / records_name;
  {
    auto out = open_out(rec_file);
    write_records_csv(records, out);
  }
  write_sidecar(rec_file, "sweep", cfg);

  SafeSetSummary summary;
  const SafeSet set = build_safe_set(records, cfg.sweep, cfg.safety_bound, cfg.limits, &summary);
  const fs::path set_file = dir / set_name;
  set.save(set_file.string());
  write_sidecar(set_file, "sweep", cfg);
  std::printf("records         %zu -> %s\n", records.size(), rec_file.string().c_str());
  std::printf("safe set        -> %s\n", set_file.string().c_str());
  print_summary(set, summary);
  return 0;
}

int cmd_build_set(const Globals &g, const std::string &records_file, const std::string &set_name)
{
  const AppConfig cfg = resolve_config(g);
  const fs::path dir = prepare_out_dir(cfg);
  const auto records = load_records(records_file, cfg.sweep);
  SafeSetSummary summary;
  const SafeSet set = build_safe_set(records, cfg.sweep, cfg.safety_bound, cfg.limits, &summary);
  const fs::path set_file = dir / set_name;
  set.save(set_file.string());
  write_sidecar(set_file, "build-set", cfg);
  std::printf("safe set        -> %s\n", set_file.string().c_str());
  print_summary(set, summary);
  return 0;
}

int cmd_contour(const Globals &g, const std::string &records_file, const std::string &name, bool with_set)
{
  const AppConfig cfg = resolve_config(g);
  const fs::path dir = prepare_out_dir(cfg);
  const auto records = load_records(records_file, cfg.sweep);
  std::shared_ptr<const SafeSet> set;
  if (with_set) {
    set = load_safe_set(cfg);
  }
  const fs::path file = dir / name;
  auto out = open_out(file);
  write_contour_csv(records, cfg.sweep, set.get(), out);
  std::printf("contour         -> %s\n", file.string().c_str());
  return 0;
}

int cmd_run(const Globals &g, const std::string &controller, const std::string &track, std::size_t run_index,
            const std::string &trace_name)
{
  AppConfig cfg = resolve_config(g);
  const fs::path dir = prepare_out_dir(cfg);
  std::shared_ptr<const SafeSet> set;
  if (controller.rfind("simplex-", 0) == 0) {
    set = load_safe_set(cfg);
  }
  const ControllerSpec spec = make_controller_spec(controller, cfg, set);
  const Path path = make_track(track, cfg.tracks);
  RunSettings settings = cfg.bench.settings;
  settings.keep_trace = true;
  const RunSeeds seeds = draw_run_seeds(cfg.bench.seed_base, run_index, settings);
  const RunResult r = simulate_run(spec, path, settings, cfg.limits, seeds.run_seed, seeds.d0, seeds.theta0);

  const fs::path file = dir / trace_name;
  {
    auto out = open_out(file);
    write_trace_csv(r.trace, spec.is_simplex(), out);
  }
  write_sidecar(file, "run", cfg);
  const auto &m = r.metrics;
  std::printf("controller %s  track %s  run %zu\n", controller.c_str(), track.c_str(), run_index);
  std::printf("d0 %.4f  theta0 %.4f\n", m.d0, m.theta0);
  std::printf("mean_d %.4f  max_d %.4f  mean_v %.4f  completed %s\n", m.mean_d, m.max_d, m.mean_v,
              m.completion ? "yes" : "no");
  if (spec.is_simplex()) {
    std::printf("switches_to_ha %zu  fraction_time_ha %.4f  audit %s\n", m.switches_to_ha, m.fraction_time_ha,
                m.audit.clean() ? "clean" : "VIOLATIONS");
  }
  if (m.aborted) {
    std::fprintf(stderr, "run aborted: %s\n", m.diagnostic.c_str());
    return 3;
  }
  std::printf("trace -> %s\n", file.string().c_str());
  return 0;
}

int cmd_bench(const Globals &g, std::optional<std::size_t> n_runs, const std::vector<std::string> &controllers,
              const std::vector<std::string> &tracks, const std::string &prefix)
{
  AppConfig cfg = resolve_config(g);
  if (n_runs) {
    cfg.bench.n_runs = *n_runs;
  }
  if (!controllers.empty()) {
    cfg.bench.controllers = controllers;
  }
  if (!tracks.empty()) {
    cfg.bench.tracks = tracks;
  }
  cfg.bench.settings.keep_trace = false;
  cfg.validate();
  const fs::path dir = prepare_out_dir(cfg);

  std::shared_ptr<const SafeSet> set;
  for (const auto &c : cfg.bench.controllers) {
    if (c.rfind("simplex-", 0) == 0) {
      set = load_safe_set(cfg);
      break;
    }
  }
  const Report report = benchmark(make_bench_cases(cfg, set), cfg.limits, cfg.workers);

  const fs::path report_file = dir / (prefix + "report.csv");
  const fs::path runs_file = dir / (prefix + "runs.csv");
  const fs::path json_file = dir / (prefix + "report.json");
  {
    auto out = open_out(report_file);
    write_report_csv(report, out);
  }
  {
    auto out = open_out(runs_file);
    write_runs_csv(report, out);
  }
  {
    auto out = open_out(json_file);
    out << report_to_json(report).dump(2) << "\n";
  }
  write_sidecar(report_file, "bench", cfg);
  write_report_csv(report, std::cout);

  std::size_t violations = 0, aborted = 0;
  for (const auto &r : report.runs) {
    violations += r.metrics.audit.clean() ? 0 : 1;
    aborted += r.metrics.aborted ? 1 : 0;
  }
  if (violations > 0) {
    std::fprintf(stderr, "warning: %zu runs violated a switching invariant\n", violations);
  }
  if (aborted > 0) {
    std::fprintf(stderr, "error: %zu runs aborted\n", aborted);
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Simplex path tracking: reachability sweep, safe set, runs and benchmark"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  Globals g;
  app.add_option("-c,--config", g.config_file, "JSON config file")->envname(kConfigEnv)->check(CLI::ExistingFile);
  app.add_flag("--quick", g.quick, "Use the reduced sweep grid");
  app.add_option("-j,--workers", g.workers, "Worker threads (0 = all cores; default from config)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("-o,--out-dir", g.out_dir, "Output directory (default from config: out)");

  std::string records_name = "sweep_records.csv";
  std::string set_name = "safe_set.txt";
  auto *sweep = app.add_subcommand("sweep", "Run the reachability sweep and build the safe set");
  sweep->add_option("--records-name", records_name, "Records file name in the output directory");
  sweep->add_option("--set-name", set_name, "Safe-set file name in the output directory");

  std::string records_file;
  auto *build = app.add_subcommand("build-set", "Build the safe set from a records file");
  build->add_option("records", records_file, "Sweep records CSV")->required()->check(CLI::ExistingFile);
  build->add_option("--set-name", set_name, "Safe-set file name in the output directory");

  std::string contour_name = "contour.csv";
  bool contour_with_set = true;
  auto *contour = app.add_subcommand("export-contour", "Per-cell worst deviation and convergence time");
  contour->add_option("records", records_file, "Sweep records CSV")->required()->check(CLI::ExistingFile);
  contour->add_option("--name", contour_name, "Contour file name in the output directory");
  contour->add_flag("!--no-set", contour_with_set, "Do not mark retained and shrunk cells");

  std::string controller = "simplex-unsafe";
  std::string track = "square";
  std::size_t run_index = 0;
  std::string trace_name = "trace.csv";
  auto *run = app.add_subcommand("run", "Simulate one run and write its mode trace");
  run->add_option("--controller", controller, "Controller id")->check(CLI::IsMember(controller_ids()));
  run->add_option("--track", track, "Track id")->check(CLI::IsMember(track_ids()));
  run->add_option("--run", run_index, "Run index (selects the seeded initial offset)");
  run->add_option("--trace-name", trace_name, "Trace file name in the output directory");

  std::optional<std::size_t> n_runs;
  std::vector<std::string> bench_controllers;
  std::vector<std::string> bench_tracks;
  std::string prefix;
  auto *bench = app.add_subcommand("bench", "Run the benchmark suite and write the report");
  bench->add_option("-n,--n-runs", n_runs, "Runs per controller and track (default from config: 30)")
      ->check(CLI::PositiveNumber);
  bench->add_option("--controller", bench_controllers, "Restrict to these controllers")
      ->check(CLI::IsMember(controller_ids()))
      ->default_str("all");
  bench->add_option("--track", bench_tracks, "Restrict to these tracks")
      ->check(CLI::IsMember(track_ids()))
      ->default_str("all");
  bench->add_option("--prefix", prefix, "Prefix for output file names");

  auto *show = app.add_subcommand("show-config", "Print the effective configuration as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sweep) return cmd_sweep(g, records_name, set_name);
    if (*build) return cmd_build_set(g, records_file, set_name);
    if (*contour) return cmd_contour(g, records_file, contour_name, contour_with_set);
    if (*run) return cmd_run(g, controller, track, run_index, trace_name);
    if (*bench) return cmd_bench(g, n_runs, bench_controllers, bench_tracks, prefix);
    if (*show) {
      std::cout << config_to_json(resolve_config(g)).dump(2) << "\n";
      return 0;
    }
  } catch (const ConfigError &e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
