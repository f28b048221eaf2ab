#ifndef SIMPLEX_TRACK__CONFIG_HPP_
#define SIMPLEX_TRACK__CONFIG_HPP_

#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "simplex_track/controllers.hpp"
#include "simplex_track/harness.hpp"
#include "simplex_track/path.hpp"
#include "simplex_track/reachability.hpp"

namespace simplex_track
{

class ConfigError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

inline const std::vector<std::string> &controller_ids()
{
  static const std::vector<std::string> ids{"pp", "scripted", "unsafe", "simplex-scripted", "simplex-unsafe"};
  return ids;
}

inline const std::vector<std::string> &track_ids()
{
  static const std::vector<std::string> ids{"square", "cosine"};
  return ids;
}

struct BenchSuite
{
  std::vector<std::string> controllers{controller_ids()};
  std::vector<std::string> tracks{track_ids()};
  std::size_t n_runs{30};
  std::uint64_t seed_base{1};
  RunSettings settings;
  bool predictive{true};
  double prediction_horizon{1.0};
};

/// Everything the command-line tool can configure. Defaults reproduce the reference setup.
struct AppConfig
{
  RobotLimits limits;
  PurePursuitParams pure_pursuit;
  TrackerGains tracker;
  Perturbation perturbation;
  SweepConfig sweep;
  double safety_bound{1.0};
  std::string safe_set_file{"data/reference_safe_set.txt"};
  TrackParams tracks;
  BenchSuite bench;
  std::string output_dir{"out"};
  unsigned workers{0};

  void validate() const
  {
    try {
      limits.validate();
    } catch (const std::exception &e) {
      throw ConfigError(std::string("limits: ") + e.what());
    }
    try {
      pure_pursuit.validate(limits);
    } catch (const std::exception &e) {
      throw ConfigError(std::string("pure_pursuit: ") + e.what());
    }
    try {
      sweep.validate();
    } catch (const std::exception &e) {
      throw ConfigError(e.what());
    }
    if (!(safety_bound > 0.0)) throw ConfigError("safety_bound: must be positive");
    if (!(tracks.spacing > 0.0)) throw ConfigError("tracks.spacing: must be positive");
    if (!(tracks.square_width > 0.0) || !(tracks.square_height > 0.0) || tracks.square_laps < 1) {
      throw ConfigError("tracks.square_*: invalid square track");
    }
    if (!(tracks.cosine_wavelength > 0.0) || !(tracks.cosine_span > 0.0)) {
      throw ConfigError("tracks.cosine_*: invalid cosine track");
    }
    if (!(bench.prediction_horizon > 0.0)) throw ConfigError("bench.prediction_horizon: must be positive");
    if (bench.n_runs < 1) throw ConfigError("bench.n_runs: must be at least 1");
    if (!(bench.settings.max_sim_time > 0.0)) throw ConfigError("bench.max_sim_time: must be positive");
    if (!(bench.settings.init_d >= 0.0) || !(bench.settings.init_theta >= 0.0)) {
      throw ConfigError("bench.init_*: must be non-negative");
    }
    for (const auto &c : bench.controllers) {
      if (std::find(controller_ids().begin(), controller_ids().end(), c) == controller_ids().end()) {
        throw ConfigError("bench.controllers: unknown controller '" + c + "'");
      }
    }
    for (const auto &t : bench.tracks) {
      if (std::find(track_ids().begin(), track_ids().end(), t) == track_ids().end()) {
        throw ConfigError("bench.tracks: unknown track '" + t + "'");
      }
    }
  }
};

namespace detail
{
template <typename T>
void read_opt(const nlohmann::json &j, const char *key, T &field)
{
  if (j.contains(key)) {
    field = j.at(key).get<T>();
  }
}
}  // namespace detail

inline nlohmann::json config_to_json(const AppConfig &c)
{
  const auto &s = c.sweep;
  return {
      {"limits", {{"v_max", c.limits.v_max}, {"omega_max", c.limits.omega_max}, {"control_period", c.limits.control_period}}},
      {"pure_pursuit", {{"lookahead", c.pure_pursuit.lookahead}, {"v_cmd", c.pure_pursuit.v_cmd}}},
      {"tracker",
       {{"k_d", c.tracker.k_d},
        {"k_theta", c.tracker.k_theta},
        {"curvature_window", c.tracker.curvature_window},
        {"preview", c.tracker.preview},
        {"speed_margin", c.tracker.speed_margin},
        {"v_min", c.tracker.v_min}}},
      {"perturbation",
       {{"amplitude", c.perturbation.amplitude},
        {"period", c.perturbation.period},
        {"corner_overshoot", c.perturbation.corner_overshoot},
        {"turn_delay", c.perturbation.turn_delay}}},
      {"sweep",
       {{"d0_min", s.d0_min}, {"d0_max", s.d0_max}, {"d0_step", s.d0_step},
        {"theta0_min", s.theta0_min}, {"theta0_max", s.theta0_max}, {"theta0_step", s.theta0_step},
        {"rp_min", s.rp_min}, {"rp_max", s.rp_max}, {"rp_step", s.rp_step},
        {"horizon", s.horizon}, {"step_size", s.step_size},
        {"n_paths", s.n_paths}, {"n_waypoints", s.n_waypoints},
        {"conv_dist", s.conv_dist}, {"conv_hold", s.conv_hold},
        {"path_seed", s.path_seed}, {"turn_limit", s.turn_limit},
        {"segment_length", s.segment_length}, {"spacing", s.spacing},
        {"runaway_distance", s.runaway_distance}}},
      {"safety_bound", c.safety_bound},
      {"safe_set_file", c.safe_set_file},
      {"tracks",
       {{"spacing", c.tracks.spacing},
        {"square_width", c.tracks.square_width},
        {"square_height", c.tracks.square_height},
        {"square_laps", c.tracks.square_laps},
        {"cosine_amplitude", c.tracks.cosine_amplitude},
        {"cosine_wavelength", c.tracks.cosine_wavelength},
        {"cosine_span", c.tracks.cosine_span}}},
      {"bench",
       {{"controllers", c.bench.controllers},
        {"tracks", c.bench.tracks},
        {"n_runs", c.bench.n_runs},
        {"seed_base", c.bench.seed_base},
        {"max_sim_time", c.bench.settings.max_sim_time},
        {"init_d", c.bench.settings.init_d},
        {"init_theta", c.bench.settings.init_theta},
        {"completion_tolerance", c.bench.settings.completion_tolerance},
        {"predictive", c.bench.predictive},
        {"prediction_horizon", c.bench.prediction_horizon}}},
      {"output_dir", c.output_dir},
      {"workers", c.workers},
  };
}

/// Applies the keys present in j on top of base. Unknown top-level keys are rejected.
inline AppConfig config_from_json(const nlohmann::json &j, AppConfig c = {})
{
  using detail::read_opt;
  static const std::vector<std::string> known{"limits", "pure_pursuit", "tracker", "perturbation", "sweep",
                                              "safety_bound", "safe_set_file", "tracks", "bench", "output_dir",
                                              "workers"};
  if (!j.is_object()) {
    throw ConfigError("config: top level must be an object");
  }
  for (const auto &[key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  try {
    if (j.contains("limits")) {
      const auto &l = j.at("limits");
      read_opt(l, "v_max", c.limits.v_max);
      read_opt(l, "omega_max", c.limits.omega_max);
      read_opt(l, "control_period", c.limits.control_period);
    }
    if (j.contains("pure_pursuit")) {
      read_opt(j.at("pure_pursuit"), "lookahead", c.pure_pursuit.lookahead);
      read_opt(j.at("pure_pursuit"), "v_cmd", c.pure_pursuit.v_cmd);
    }
    if (j.contains("tracker")) {
      const auto &t = j.at("tracker");
      read_opt(t, "k_d", c.tracker.k_d);
      read_opt(t, "k_theta", c.tracker.k_theta);
      read_opt(t, "curvature_window", c.tracker.curvature_window);
      read_opt(t, "preview", c.tracker.preview);
      read_opt(t, "speed_margin", c.tracker.speed_margin);
      read_opt(t, "v_min", c.tracker.v_min);
    }
    if (j.contains("perturbation")) {
      const auto &p = j.at("perturbation");
      read_opt(p, "amplitude", c.perturbation.amplitude);
      read_opt(p, "period", c.perturbation.period);
      read_opt(p, "corner_overshoot", c.perturbation.corner_overshoot);
      read_opt(p, "turn_delay", c.perturbation.turn_delay);
    }
    if (j.contains("sweep")) {
      const auto &s = j.at("sweep");
      auto &w = c.sweep;
      read_opt(s, "d0_min", w.d0_min);
      read_opt(s, "d0_max", w.d0_max);
      read_opt(s, "d0_step", w.d0_step);
      read_opt(s, "theta0_min", w.theta0_min);
      read_opt(s, "theta0_max", w.theta0_max);
      read_opt(s, "theta0_step", w.theta0_step);
      read_opt(s, "rp_min", w.rp_min);
      read_opt(s, "rp_max", w.rp_max);
      read_opt(s, "rp_step", w.rp_step);
      read_opt(s, "horizon", w.horizon);
      read_opt(s, "step_size", w.step_size);
      read_opt(s, "n_paths", w.n_paths);
      read_opt(s, "n_waypoints", w.n_waypoints);
      read_opt(s, "conv_dist", w.conv_dist);
      read_opt(s, "conv_hold", w.conv_hold);
      read_opt(s, "path_seed", w.path_seed);
      read_opt(s, "turn_limit", w.turn_limit);
      read_opt(s, "segment_length", w.segment_length);
      read_opt(s, "spacing", w.spacing);
      read_opt(s, "runaway_distance", w.runaway_distance);
    }
    read_opt(j, "safety_bound", c.safety_bound);
    read_opt(j, "safe_set_file", c.safe_set_file);
    if (j.contains("tracks")) {
      const auto &t = j.at("tracks");
      read_opt(t, "spacing", c.tracks.spacing);
      read_opt(t, "square_width", c.tracks.square_width);
      read_opt(t, "square_height", c.tracks.square_height);
      read_opt(t, "square_laps", c.tracks.square_laps);
      read_opt(t, "cosine_amplitude", c.tracks.cosine_amplitude);
      read_opt(t, "cosine_wavelength", c.tracks.cosine_wavelength);
      read_opt(t, "cosine_span", c.tracks.cosine_span);
    }
    if (j.contains("bench")) {
      const auto &b = j.at("bench");
      read_opt(b, "controllers", c.bench.controllers);
      read_opt(b, "tracks", c.bench.tracks);
      read_opt(b, "n_runs", c.bench.n_runs);
      read_opt(b, "seed_base", c.bench.seed_base);
      read_opt(b, "max_sim_time", c.bench.settings.max_sim_time);
      read_opt(b, "init_d", c.bench.settings.init_d);
      read_opt(b, "init_theta", c.bench.settings.init_theta);
      read_opt(b, "completion_tolerance", c.bench.settings.completion_tolerance);
      read_opt(b, "predictive", c.bench.predictive);
      read_opt(b, "prediction_horizon", c.bench.prediction_horizon);
    }
    read_opt(j, "output_dir", c.output_dir);
    read_opt(j, "workers", c.workers);
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline AppConfig load_config_file(const std::string &file, AppConfig base = {})
{
  std::ifstream in(file);
  if (!in) {
    throw ConfigError("cannot open config file " + file);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError("config file " + file + ": " + e.what());
  }
  return config_from_json(j, std::move(base));
}

inline Path make_track(const std::string &id, const TrackParams &params)
{
  if (id == "square") return square_track(params);
  if (id == "cosine") return cosine_track(params);
  throw ConfigError("unknown track '" + id + "'");
}

/**
 * Builds the controller catalog entry for id. Simplex variants need the safe
 * set; the unsafe tracker's oscillation phase is drawn from the run seed.
 */
inline ControllerSpec make_controller_spec(const std::string &id, const AppConfig &cfg,
                                           std::shared_ptr<const SafeSet> safe_set)
{
  const RobotLimits limits = cfg.limits;
  const auto pp = std::make_shared<const PurePursuit>(cfg.pure_pursuit, limits);
  const auto scripted = std::make_shared<const ScriptedTracker>(cfg.tracker, limits);
  const TrackerGains gains = cfg.tracker;
  const Perturbation base = cfg.perturbation;
  auto make_unsafe = [gains, base, limits](std::uint64_t seed) -> ControllerPtr {
    std::mt19937_64 rng(mix_seed(seed, 0xC0FFEE));
    Perturbation p = base;
    p.phase = 2.0 * std::numbers::pi * unit_uniform(rng);
    return std::make_shared<const UnsafeTracker>(gains, p, limits);
  };

  ControllerSpec spec;
  spec.id = id;
  spec.decision.predictive = cfg.bench.predictive;
  spec.decision.horizon = cfg.bench.prediction_horizon;
  spec.decision.control_period = limits.control_period;
  if (id == "pp") {
    spec.make = [pp](std::uint64_t) { return pp; };
  } else if (id == "scripted") {
    spec.make = [scripted](std::uint64_t) { return scripted; };
  } else if (id == "unsafe") {
    spec.make = make_unsafe;
  } else if (id == "simplex-scripted" || id == "simplex-unsafe") {
    if (!safe_set) {
      throw ConfigError("controller '" + id + "' needs a safe set");
    }
    if (id == "simplex-scripted") {
      spec.make = [scripted](std::uint64_t) { return scripted; };
    } else {
      spec.make = make_unsafe;
    }
    spec.assurance = pp;
    spec.safe_set = std::move(safe_set);
  } else {
    throw ConfigError("unknown controller '" + id + "'");
  }
  return spec;
}

/// Suite of (controller, track) cases in controller-major order.
inline std::vector<BenchCase> make_bench_cases(const AppConfig &cfg, std::shared_ptr<const SafeSet> safe_set)
{
  std::vector<std::shared_ptr<const Path>> paths;
  for (const auto &t : cfg.bench.tracks) {
    paths.push_back(std::make_shared<const Path>(make_track(t, cfg.tracks)));
  }
  std::vector<BenchCase> cases;
  for (const auto &c : cfg.bench.controllers) {
    for (std::size_t i = 0; i < cfg.bench.tracks.size(); ++i) {
      BenchCase bc;
      bc.controller = make_controller_spec(c, cfg, safe_set);
      bc.track = cfg.bench.tracks[i];
      bc.path = paths[i];
      bc.n_runs = cfg.bench.n_runs;
      bc.seed_base = cfg.bench.seed_base;
      bc.settings = cfg.bench.settings;
      cases.push_back(std::move(bc));
    }
  }
  return cases;
}

}  // namespace simplex_track

#endif  // SIMPLEX_TRACK__CONFIG_HPP_
