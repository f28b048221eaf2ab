#ifndef SIMPLEX_TRACK__SIMPLEX_HPP_
#define SIMPLEX_TRACK__SIMPLEX_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "simplex_track/controllers.hpp"
#include "simplex_track/kinematics.hpp"
#include "simplex_track/path.hpp"
#include "simplex_track/reachability.hpp"

namespace simplex_track
{

enum class Mode
{
  HighPerformance,
  HighAssurance,
};

inline const char *to_string(Mode m)
{
  return m == Mode::HighPerformance ? "PERFORMANCE" : "ASSURANCE";
}

/// Decision-module bookkeeping for one run.
struct SwitchState
{
  Mode mode{Mode::HighPerformance};
  std::optional<double> t_entered_ha;  ///< most recent entry into HighAssurance
  std::size_t switch_count_to_ha{0};
  std::size_t switch_count_to_hp{0};
  double time_in_ha{0.0};
  std::optional<double> last_t;

  bool operator==(const SwitchState &) const = default;
};

struct Decision
{
  Mode mode;
  SwitchState state;
};

/// Starting state: HighAssurance from t = 0 if the initial frame is outside the shrunk set.
inline SwitchState initial_switch_state(const PathFrame &frame, const SafeSet &set, double t0 = 0.0)
{
  SwitchState s;
  if (!set.contains(frame.d_signed, frame.theta_rel)) {
    s.mode = Mode::HighAssurance;
    s.t_entered_ha = t0;
  }
  return s;
}

/**
 * The switching rule. The high-performance controller is selected iff the
 * current frame (and the predicted frame, when supplied) lies in the shrunk
 * safe set and, coming from HighAssurance, the dwell time has elapsed since
 * the last entry into HighAssurance. Switching to HighAssurance is never
 * delayed.
 */
inline Decision decide(const PathFrame &frame, double t, const SwitchState &state, const SafeSet &set,
                       const PathFrame *predicted = nullptr)
{
  if (!std::isfinite(t)) {
    throw std::invalid_argument("decide: non-finite time");
  }
  if (state.last_t && t < *state.last_t) {
    throw std::invalid_argument("decide: time ran backward");
  }
  SwitchState next = state;
  if (state.mode == Mode::HighAssurance && state.last_t) {
    next.time_in_ha += t - *state.last_t;
  }
  next.last_t = t;

  bool member = set.contains(frame.d_signed, frame.theta_rel);
  if (predicted) {
    member = member && set.contains(predicted->d_signed, predicted->theta_rel);
  }

  if (state.mode == Mode::HighPerformance) {
    if (!member) {
      next.mode = Mode::HighAssurance;
      next.t_entered_ha = t;
      ++next.switch_count_to_ha;
    }
  } else {
    const bool dwell_over = !state.t_entered_ha || t >= *state.t_entered_ha + set.dwell_time();
    if (member && dwell_over) {
      next.mode = Mode::HighPerformance;
      ++next.switch_count_to_hp;
    }
  }
  return {next.mode, next};
}

struct DecisionOptions
{
  /// Also require states predicted under the high-performance controller to be in the set.
  bool predictive{false};
  double control_period{0.05};
  /// Prediction length; one control period at minimum.
  double horizon{0.05};

  std::size_t horizon_steps() const
  {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(horizon / control_period)));
  }
};

/**
 * Rolls the high-performance controller forward from the current input and
 * returns the first predicted frame outside the shrunk set, or the last one
 * if all stay inside.
 */
inline PathFrame predict_frame(const ControllerInput &input, const Controller &hp, const SafeSet &set,
                               const DecisionOptions &opt, std::optional<ControlCommand> *first_cmd = nullptr)
{
  Pose pose = input.pose;
  PathFrame frame = input.frame;
  const std::size_t n = opt.horizon_steps();
  for (std::size_t k = 0; k < n; ++k) {
    const ControllerInput in{pose, frame, input.path, input.time + static_cast<double>(k) * opt.control_period};
    const ControlCommand cmd = hp.compute(in);
    if (k == 0 && first_cmd) {
      *first_cmd = cmd;
    }
    pose = step(pose, cmd, opt.control_period);
    frame = project_near(input.path, {pose.x, pose.y}, pose.theta, frame.arclength);
    if (!set.contains(frame.d_signed, frame.theta_rel)) {
      break;
    }
  }
  return frame;
}

struct SimplexOutput
{
  ControlCommand cmd;
  Mode mode;
  SwitchState state;
};

/// One control cycle of the composed controller: decide, then delegate.
inline SimplexOutput simplex_compute(const ControllerInput &input, const Controller &hp, const Controller &ha,
                                     const SafeSet &set, const SwitchState &state, const DecisionOptions &opt = {})
{
  Decision d;
  std::optional<ControlCommand> hp_cmd;
  if (opt.predictive) {
    const PathFrame pf = predict_frame(input, hp, set, opt, &hp_cmd);
    d = decide(input.frame, input.time, state, set, &pf);
  } else {
    d = decide(input.frame, input.time, state, set);
  }
  ControlCommand cmd;
  if (d.mode == Mode::HighPerformance) {
    cmd = hp_cmd ? *hp_cmd : hp.compute(input);
  } else {
    cmd = ha.compute(input);
  }
  return {cmd, d.mode, d.state};
}

/// One logged control cycle.
struct TraceTick
{
  double t{0.0};
  Mode mode{Mode::HighPerformance};
  double d_signed{0.0};
  double theta_rel{0.0};
  double v{0.0};
  double omega{0.0};
  double x{0.0};
  double y{0.0};
  double theta{0.0};
};

/// Switching-invariant violations found in a logged run.
struct SwitchAudit
{
  std::size_t ticks_outside_in_hp{0};  ///< shrunk-set membership failed but HP was applied
  std::size_t early_returns{0};        ///< HA -> HP before the dwell time elapsed
  std::size_t unsound_switches{0};     ///< HP -> HA at a state outside the unshrunk set
  std::size_t switches_to_ha{0};

  bool clean() const { return ticks_outside_in_hp == 0 && early_returns == 0 && unsound_switches == 0; }
};

/// Checks reaction latency, dwell gating and margin soundness over a simplex trace.
inline SwitchAudit audit_trace(const std::vector<TraceTick> &trace, const SafeSet &set)
{
  SwitchAudit a;
  std::optional<double> t_entered;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const auto &tk = trace[k];
    const bool member = set.contains(tk.d_signed, tk.theta_rel);
    if (!member && tk.mode == Mode::HighPerformance) {
      ++a.ticks_outside_in_hp;
    }
    if (k == 0) {
      if (tk.mode == Mode::HighAssurance) {
        t_entered = tk.t;
      }
      continue;
    }
    const Mode prev = trace[k - 1].mode;
    if (prev == Mode::HighPerformance && tk.mode == Mode::HighAssurance) {
      ++a.switches_to_ha;
      t_entered = tk.t;
      if (!set.contains_unshrunk(tk.d_signed, tk.theta_rel)) {
        ++a.unsound_switches;
      }
    } else if (prev == Mode::HighAssurance && tk.mode == Mode::HighPerformance) {
      if (t_entered && !(tk.t >= *t_entered + set.dwell_time())) {
        ++a.early_returns;
      }
    }
  }
  return a;
}

}  // namespace simplex_track

#endif  // SIMPLEX_TRACK__SIMPLEX_HPP_
