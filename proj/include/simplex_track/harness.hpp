#ifndef SIMPLEX_TRACK__HARNESS_HPP_
#define SIMPLEX_TRACK__HARNESS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "simplex_track/controllers.hpp"
#include "simplex_track/kinematics.hpp"
#include "simplex_track/parallel.hpp"
#include "simplex_track/path.hpp"
#include "simplex_track/reachability.hpp"
#include "simplex_track/simplex.hpp"

namespace simplex_track
{

/// How a benchmark builds the controller of one run. A non-null `assurance` makes it a Simplex controller.
struct ControllerSpec
{
  std::string id;
  std::function<ControllerPtr(std::uint64_t run_seed)> make;
  ControllerPtr assurance;
  std::shared_ptr<const SafeSet> safe_set;
  DecisionOptions decision;

  bool is_simplex() const { return assurance != nullptr; }
};

struct RunSettings
{
  double max_sim_time{300.0};       ///< [s]
  double init_d{0.1};               ///< initial cross-track offset drawn from [-init_d, init_d] [m]
  double init_theta{0.1};           ///< initial heading offset drawn from [-init_theta, init_theta] [rad]
  double completion_tolerance{0.25};///< run completes within this arclength of the path end [m]
  bool keep_trace{true};
};

struct RunMetrics
{
  double mean_d{0.0};
  double max_d{0.0};
  double mean_v{0.0};
  bool completion{false};
  std::size_t switches_to_ha{0};
  double fraction_time_ha{0.0};
  std::size_t ticks{0};
  double d0{0.0};
  double theta0{0.0};
  bool aborted{false};
  std::string diagnostic;
  SwitchAudit audit;
};

struct RunResult
{
  std::vector<TraceTick> trace;
  RunMetrics metrics;
};

/// Seeded initial offsets and perturbation stream of one run.
struct RunSeeds
{
  std::uint64_t run_seed;
  double d0;
  double theta0;
};

inline RunSeeds draw_run_seeds(std::uint64_t seed_base, std::size_t run_index, const RunSettings &s)
{
  const std::uint64_t run_seed = mix_seed(seed_base, run_index);
  std::mt19937_64 rng(run_seed);
  const double d0 = uniform_in(rng, -s.init_d, s.init_d);
  const double th0 = uniform_in(rng, -s.init_theta, s.init_theta);
  return {run_seed, d0, th0};
}

/**
 * Closed-loop run at the control period from the start of the path (offset
 * by d0, theta0) until completion or max_sim_time. Metrics are averaged over
 * control ticks.
 */
inline RunResult simulate_run(const ControllerSpec &spec, const Path &path, const RunSettings &settings,
                              const RobotLimits &limits, std::uint64_t run_seed, double d0, double theta0)
{
  if (spec.is_simplex() && !spec.safe_set) {
    throw std::invalid_argument("simplex controller needs a safe set");
  }
  const double dt = limits.control_period;
  const auto max_ticks = static_cast<std::size_t>(std::llround(settings.max_sim_time / dt));
  const ControllerPtr primary = spec.make(run_seed);

  RunResult out;
  RunMetrics &m = out.metrics;
  m.d0 = d0;
  m.theta0 = theta0;

  Pose pose = pose_on_path(path, 0.0, d0, theta0);
  PathFrame frame = project_near(path, {pose.x, pose.y}, pose.theta, 0.0);
  SwitchState sw;
  if (spec.is_simplex()) {
    sw = initial_switch_state(frame, *spec.safe_set);
  }
  DecisionOptions opt = spec.decision;
  opt.control_period = dt;

  double sum_d = 0.0, sum_v = 0.0;
  std::size_t ha_ticks = 0;
  std::vector<TraceTick> trace;
  try {
    for (std::size_t k = 0;; ++k) {
      if (frame.arclength >= path.length() - settings.completion_tolerance) {
        m.completion = true;
        break;
      }
      if (k >= max_ticks) {
        break;
      }
      const double t = static_cast<double>(k) * dt;
      const ControllerInput in{pose, frame, path, t};
      ControlCommand cmd;
      Mode mode = Mode::HighPerformance;
      if (spec.is_simplex()) {
        const auto o = simplex_compute(in, *primary, *spec.assurance, *spec.safe_set, sw, opt);
        cmd = o.cmd;
        mode = o.mode;
        sw = o.state;
      } else {
        cmd = primary->compute(in);
      }
      if (!limits.admits(cmd)) {
        throw std::runtime_error("controller produced an inadmissible command");
      }
      const double dist = std::abs(frame.d_signed);
      sum_d += dist;
      sum_v += cmd.v;
      m.max_d = std::max(m.max_d, dist);
      if (mode == Mode::HighAssurance) {
        ++ha_ticks;
      }
      trace.push_back({t, mode, frame.d_signed, frame.theta_rel, cmd.v, cmd.omega, pose.x, pose.y, pose.theta});
      pose = step(pose, cmd, dt);
      frame = project_near(path, {pose.x, pose.y}, pose.theta, frame.arclength);
      if (!is_finite(pose)) {
        throw std::runtime_error("non-finite state");
      }
    }
  } catch (const std::exception &e) {
    m.aborted = true;
    m.diagnostic = e.what();
  }

  m.ticks = trace.size();
  if (m.ticks > 0) {
    m.mean_d = sum_d / static_cast<double>(m.ticks);
    m.mean_v = sum_v / static_cast<double>(m.ticks);
    m.fraction_time_ha = static_cast<double>(ha_ticks) / static_cast<double>(m.ticks);
  }
  if (spec.is_simplex()) {
    m.switches_to_ha = sw.switch_count_to_ha;
    m.audit = audit_trace(trace, *spec.safe_set);
  }
  if (settings.keep_trace) {
    out.trace = std::move(trace);
  }
  return out;
}

/// One (controller, track) row of a benchmark.
struct BenchCase
{
  ControllerSpec controller;
  std::string track;
  std::shared_ptr<const Path> path;
  std::size_t n_runs{30};
  std::uint64_t seed_base{1};
  RunSettings settings;
};

struct RunRow
{
  std::string controller;
  std::string track;
  std::size_t run{0};
  RunMetrics metrics;
};

struct ReportRow
{
  std::string controller;
  std::string track;
  double mean_d{0.0};          ///< mean over runs of the per-run mean |d|
  double max_d{0.0};           ///< max over runs
  double mean_v{0.0};          ///< mean over runs
  double switches_to_ha{0.0};  ///< mean per run
  double fraction_time_ha{0.0};///< mean over runs
  std::size_t n_runs{0};

  bool operator==(const ReportRow &) const = default;
};

struct Report
{
  std::vector<ReportRow> rows;
  std::vector<RunRow> runs;
  std::vector<std::vector<TraceTick>> traces;  ///< parallel to runs when traces are kept
};

inline ReportRow aggregate_runs(const std::string &controller, const std::string &track,
                                const std::vector<RunMetrics> &runs)
{
  ReportRow r{controller, track};
  r.n_runs = runs.size();
  if (runs.empty()) {
    return r;
  }
  for (const auto &m : runs) {
    r.mean_d += m.mean_d;
    r.max_d = std::max(r.max_d, m.max_d);
    r.mean_v += m.mean_v;
    r.switches_to_ha += static_cast<double>(m.switches_to_ha);
    r.fraction_time_ha += m.fraction_time_ha;
  }
  const auto n = static_cast<double>(runs.size());
  r.mean_d /= n;
  r.mean_v /= n;
  r.switches_to_ha /= n;
  r.fraction_time_ha /= n;
  return r;
}

/// Runs every case n_runs times; results are reduced in case/run order, so the report is worker-count independent.
inline Report benchmark(const std::vector<BenchCase> &cases, const RobotLimits &limits, unsigned workers = 0)
{
  struct Job
  {
    std::size_t c, run;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    if (!cases[c].path) {
      throw std::invalid_argument("bench case without a path");
    }
    for (std::size_t r = 0; r < cases[c].n_runs; ++r) {
      jobs.push_back({c, r});
    }
  }
  std::vector<RunResult> results(jobs.size());
  parallel_for(jobs.size(), workers, [&](std::size_t i) {
    const BenchCase &bc = cases[jobs[i].c];
    const RunSeeds seeds = draw_run_seeds(bc.seed_base, jobs[i].run, bc.settings);
    results[i] = simulate_run(bc.controller, *bc.path, bc.settings, limits, seeds.run_seed, seeds.d0, seeds.theta0);
  }, 1);

  Report report;
  std::size_t i = 0;
  for (const auto &bc : cases) {
    std::vector<RunMetrics> ms;
    for (std::size_t r = 0; r < bc.n_runs; ++r, ++i) {
      ms.push_back(results[i].metrics);
      report.runs.push_back({bc.controller.id, bc.track, r, results[i].metrics});
      report.traces.push_back(std::move(results[i].trace));
    }
    report.rows.push_back(aggregate_runs(bc.controller.id, bc.track, ms));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Export

inline void write_report_csv(const Report &report, std::ostream &out)
{
  out << "controller,track,mean_d,max_d,mean_v,switches_to_ha,fraction_time_ha,n_runs\n";
  char buf[256];
  for (const auto &r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f,%.6f,%.4f,%.6f,%zu\n", r.controller.c_str(), r.track.c_str(),
                  r.mean_d, r.max_d, r.mean_v, r.switches_to_ha, r.fraction_time_ha, r.n_runs);
    out << buf;
  }
}

inline void write_runs_csv(const Report &report, std::ostream &out)
{
  out << "controller,track,run,d0,theta0,mean_d,max_d,mean_v,completion,switches_to_ha,fraction_time_ha,ticks,"
         "aborted\n";
  char buf[320];
  for (const auto &r : report.runs) {
    const auto &m = r.metrics;
    std::snprintf(buf, sizeof(buf), "%s,%s,%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%d,%zu,%.6f,%zu,%d\n", r.controller.c_str(),
                  r.track.c_str(), r.run, m.d0, m.theta0, m.mean_d, m.max_d, m.mean_v, m.completion ? 1 : 0,
                  m.switches_to_ha, m.fraction_time_ha, m.ticks, m.aborted ? 1 : 0);
    out << buf;
  }
}

/// Mode trace: one line per control tick.
inline void write_trace_csv(const std::vector<TraceTick> &trace, bool simplex, std::ostream &out)
{
  out << "t,mode,d_signed,theta_rel,v,omega\n";
  char buf[192];
  for (const auto &tk : trace) {
    std::snprintf(buf, sizeof(buf), "%.2f,%s,%.6f,%.6f,%.6f,%.6f\n", tk.t, simplex ? to_string(tk.mode) : "DIRECT",
                  tk.d_signed, tk.theta_rel, tk.v, tk.omega);
    out << buf;
  }
}

inline nlohmann::json report_to_json(const Report &report)
{
  nlohmann::json rows = nlohmann::json::array();
  for (const auto &r : report.rows) {
    rows.push_back({{"controller", r.controller},
                    {"track", r.track},
                    {"mean_d", r.mean_d},
                    {"max_d", r.max_d},
                    {"mean_v", r.mean_v},
                    {"switches_to_ha", r.switches_to_ha},
                    {"fraction_time_ha", r.fraction_time_ha},
                    {"n_runs", r.n_runs}});
  }
  return {{"format", "simplex_track_report"}, {"version", 1}, {"rows", rows}};
}

inline Report report_from_json(const nlohmann::json &j)
{
  if (j.value("format", "") != "simplex_track_report" || j.value("version", 0) != 1) {
    throw std::runtime_error("not a simplex_track report (format/version)");
  }
  Report r;
  for (const auto &row : j.at("rows")) {
    ReportRow x;
    x.controller = row.at("controller").get<std::string>();
    x.track = row.at("track").get<std::string>();
    x.mean_d = row.at("mean_d").get<double>();
    x.max_d = row.at("max_d").get<double>();
    x.mean_v = row.at("mean_v").get<double>();
    x.switches_to_ha = row.at("switches_to_ha").get<double>();
    x.fraction_time_ha = row.at("fraction_time_ha").get<double>();
    x.n_runs = row.at("n_runs").get<std::size_t>();
    r.rows.push_back(x);
  }
  return r;
}

}  // namespace simplex_track

#endif  // SIMPLEX_TRACK__HARNESS_HPP_
