#ifndef SIMPLEX_TRACK__CONTROLLERS_HPP_
#define SIMPLEX_TRACK__CONTROLLERS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "simplex_track/kinematics.hpp"
#include "simplex_track/path.hpp"

namespace simplex_track
{

struct ControllerInput
{
  Pose pose;
  PathFrame frame;  ///< projection of pose onto path, maintained by the caller
  const Path &path;
  double time{0.0};
};

/// Common signature of high-performance and high-assurance controllers.
class Controller
{
public:
  virtual ~Controller() = default;
  virtual ControlCommand compute(const ControllerInput &input) const = 0;
  virtual std::string name() const = 0;
};

using ControllerPtr = std::shared_ptr<const Controller>;

namespace detail
{
inline void require_finite(const ControllerInput &in)
{
  if (!is_finite(in.pose) || !std::isfinite(in.frame.d_signed) || !std::isfinite(in.frame.theta_rel) ||
      !std::isfinite(in.time)) {
    throw std::invalid_argument("controller input is not finite");
  }
}

/// Controllers stop once the projection has reached the final waypoint.
inline bool at_path_end(const ControllerInput &in)
{
  return in.frame.arclength >= in.path.length() - 1e-9;
}

/// Heading change of the polyline between two arclengths, unwrapped segment by segment.
inline double heading_change(const Path &path, double s_from, double s_to)
{
  s_from = std::clamp(s_from, 0.0, path.length());
  s_to = std::clamp(s_to, 0.0, path.length());
  const std::size_t a = path.segment_at(s_from);
  const std::size_t b = path.segment_at(s_to);
  double total = 0.0;
  for (std::size_t i = a; i < b; ++i) {
    total += wrap_angle(path.heading(i + 1) - path.heading(i));
  }
  return total;
}

inline double sinc(double x)
{
  return std::abs(x) < 1e-6 ? 1.0 - x * x / 6.0 : std::sin(x) / x;
}
}  // namespace detail

struct PurePursuitParams
{
  double lookahead{1.0};  ///< L [m]
  double v_cmd{0.5};      ///< constant forward speed [m/s]

  void validate(const RobotLimits &limits) const
  {
    if (!(lookahead > 0.0) || !std::isfinite(lookahead)) {
      throw std::invalid_argument("pure pursuit: lookahead must be positive");
    }
    if (!(v_cmd > 0.0) || v_cmd > limits.v_max) {
      throw std::invalid_argument("pure pursuit: v_cmd must lie in (0, v_max]");
    }
  }
};

/// Geometric pure pursuit: steer along the arc through the robot and the lookahead point.
class PurePursuit final : public Controller
{
public:
  PurePursuit(PurePursuitParams params, RobotLimits limits) : params_(params), limits_(limits)
  {
    limits_.validate();
    params_.validate(limits_);
  }

  ControlCommand compute(const ControllerInput &in) const override
  {
    detail::require_finite(in);
    if (detail::at_path_end(in)) {
      return {};
    }
    const Vec2 robot{in.pose.x, in.pose.y};
    const Lookahead target = lookahead_point(in.path, in.frame, robot, params_.lookahead);
    const Vec2 rel = target.point - robot;
    const double l_eff_sq = dot(rel, rel);
    if (l_eff_sq < 1e-18) {
      return {};
    }
    // lateral offset of the target in the robot frame
    const double y_l = -std::sin(in.pose.theta) * rel.x + std::cos(in.pose.theta) * rel.y;
    const double curvature = 2.0 * y_l / l_eff_sq;
    return limits_.clamp({params_.v_cmd, params_.v_cmd * curvature});
  }

  std::string name() const override { return "pp"; }
  const PurePursuitParams &params() const { return params_; }

private:
  PurePursuitParams params_;
  RobotLimits limits_;
};

/// Gains of the scripted stand-in for a learned high-performance policy.
struct TrackerGains
{
  double k_d{1.0};               ///< cross-track gain [1/m^2]
  double k_theta{2.0};           ///< heading gain [1/s]
  double curvature_window{1.0};  ///< centered arclength window for the curvature estimate [m]
  double preview{2.0};           ///< distance scanned ahead for speed scheduling [m]
  double speed_margin{1.6};      ///< corner speed is speed_margin * omega_max / curvature; above 1 corners get cut
  double v_min{0.2};             ///< [m/s]
};

/**
 * Heading-plus-cross-track feedback with curvature feedforward:
 *   omega = v k - k_theta theta - k_d v d sinc(theta)
 * and a speed schedule that slows down ahead of sharp turns.
 */
class ScriptedTracker : public Controller
{
public:
  ScriptedTracker(TrackerGains gains, RobotLimits limits) : gains_(gains), limits_(limits)
  {
    limits_.validate();
    if (!(gains_.curvature_window > 0.0) || !(gains_.preview >= 0.0) || !(gains_.v_min > 0.0) ||
        gains_.v_min > limits_.v_max || !(gains_.speed_margin > 0.0)) {
      throw std::invalid_argument("scripted tracker: invalid gains");
    }
  }

  ControlCommand compute(const ControllerInput &in) const override
  {
    detail::require_finite(in);
    if (detail::at_path_end(in)) {
      return {};
    }
    const double s = in.frame.arclength;
    return feedback(in, speed(in.path, s), curvature(in.path, s));
  }

  std::string name() const override { return "scripted"; }
  const TrackerGains &gains() const { return gains_; }

protected:
  double curvature(const Path &path, double s) const
  {
    const double w = gains_.curvature_window;
    return detail::heading_change(path, s - 0.5 * w, s + 0.5 * w) / w;
  }

  double speed(const Path &path, double s) const
  {
    double k_max = 0.0;
    for (double ds = 0.0; ds <= gains_.preview + 1e-9; ds += 0.25) {
      k_max = std::max(k_max, std::abs(curvature(path, s + ds)));
    }
    if (k_max < 1e-9) {
      return limits_.v_max;
    }
    return std::clamp(gains_.speed_margin * limits_.omega_max / k_max, gains_.v_min, limits_.v_max);
  }

  ControlCommand feedback(const ControllerInput &in, double v, double k_ff) const
  {
    const double th = in.frame.theta_rel;
    const double d = in.frame.d_signed;
    const double omega = v * k_ff - gains_.k_theta * th - gains_.k_d * v * d * detail::sinc(th);
    return limits_.clamp({v, omega});
  }

  const RobotLimits &limits() const { return limits_; }

private:
  TrackerGains gains_;
  RobotLimits limits_;
};

/// Destabilizing additions for the unsafe stand-in policy.
struct Perturbation
{
  double amplitude{0.35};        ///< heading-bias oscillation [rad/s]
  double period{6.0};            ///< [s]
  double phase{0.0};             ///< [rad]
  double corner_overshoot{1.0};  ///< 0: scripted behavior at corners, 1: full speed and late turn
  double turn_delay{0.5};        ///< arclength lag of the feedforward at full overshoot [m]
};

/**
 * Scripted tracker that keeps speed through corners, turns late and carries a
 * sinusoidal heading bias. Used to provoke safety violations.
 */
class UnsafeTracker final : public ScriptedTracker
{
public:
  UnsafeTracker(TrackerGains gains, Perturbation perturbation, RobotLimits limits)
  : ScriptedTracker(gains, limits), perturbation_(perturbation)
  {
    if (!(perturbation_.period > 0.0) || !(perturbation_.amplitude >= 0.0) ||
        perturbation_.corner_overshoot < 0.0 || perturbation_.corner_overshoot > 1.0 ||
        !(perturbation_.turn_delay >= 0.0)) {
      throw std::invalid_argument("unsafe tracker: invalid perturbation");
    }
  }

  ControlCommand compute(const ControllerInput &in) const override
  {
    detail::require_finite(in);
    if (detail::at_path_end(in)) {
      return {};
    }
    const double s = in.frame.arclength;
    const double f = perturbation_.corner_overshoot;
    const double v_sched = speed(in.path, s);
    const double v = v_sched + f * (limits().v_max - v_sched);
    ControlCommand cmd = feedback(in, v, curvature(in.path, s - f * perturbation_.turn_delay));
    cmd.omega += perturbation_.amplitude *
                 std::sin(2.0 * std::numbers::pi * in.time / perturbation_.period + perturbation_.phase);
    return limits().clamp(cmd);
  }

  std::string name() const override { return "unsafe"; }
  const Perturbation &perturbation() const { return perturbation_; }

private:
  Perturbation perturbation_;
};

class PolicyFileError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// One rectangular bin of a tabulated policy.
struct PolicyBin
{
  double d_lo, d_hi, theta_lo, theta_hi;
  ControlCommand cmd;
};

/**
 * Tabulated policy over (d_signed, theta_rel). Bins must tile a box exactly;
 * queries are clamped into the box and resolved to the containing bin.
 */
class PolicyFileController final : public Controller
{
public:
  PolicyFileController(const std::vector<PolicyBin> &bins, RobotLimits limits) : limits_(limits)
  {
    limits_.validate();
    build(bins);
  }

  static PolicyFileController from_csv(std::istream &in, RobotLimits limits)
  {
    std::vector<PolicyBin> bins;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line == "\r" || line[0] == '#') {
        continue;
      }
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream ls(line);
      PolicyBin b{};
      if (!(ls >> b.d_lo >> b.d_hi >> b.theta_lo >> b.theta_hi >> b.cmd.v >> b.cmd.omega)) {
        throw PolicyFileError("policy line " + std::to_string(lineno) + ": expected 6 numbers");
      }
      ls >> std::ws;
      if (!ls.eof()) {
        throw PolicyFileError("policy line " + std::to_string(lineno) + ": trailing data");
      }
      bins.push_back(b);
    }
    return PolicyFileController(bins, limits);
  }

  static PolicyFileController from_file(const std::string &file, RobotLimits limits)
  {
    std::ifstream in(file);
    if (!in) {
      throw PolicyFileError("cannot open policy file " + file);
    }
    return from_csv(in, limits);
  }

  static void write_csv(const std::vector<PolicyBin> &bins, std::ostream &out)
  {
    char buf[192];
    for (const auto &b : bins) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", b.d_lo, b.d_hi, b.theta_lo,
                    b.theta_hi, b.cmd.v, b.cmd.omega);
      out << buf;
    }
  }

  ControlCommand compute(const ControllerInput &in) const override
  {
    detail::require_finite(in);
    if (detail::at_path_end(in)) {
      return {};
    }
    const std::size_t i = locate(d_edges_, in.frame.d_signed);
    const std::size_t j = locate(theta_edges_, in.frame.theta_rel);
    return table_[i * (theta_edges_.size() - 1) + j];
  }

  std::string name() const override { return "policy"; }

private:
  static std::size_t locate(const std::vector<double> &edges, double value)
  {
    const auto it = std::upper_bound(edges.begin() + 1, edges.end() - 1, value);
    return static_cast<std::size_t>(std::distance(edges.begin() + 1, it));
  }

  void build(const std::vector<PolicyBin> &bins)
  {
    if (bins.empty()) {
      throw PolicyFileError("policy has no bins");
    }
    std::set<double> d_set, th_set;
    for (const auto &b : bins) {
      if (!std::isfinite(b.d_lo) || !std::isfinite(b.d_hi) || !std::isfinite(b.theta_lo) ||
          !std::isfinite(b.theta_hi)) {
        throw PolicyFileError("policy bin edges must be finite");
      }
      if (!(b.d_lo < b.d_hi) || !(b.theta_lo < b.theta_hi)) {
        throw PolicyFileError("policy bin edges must be increasing");
      }
      if (!limits_.admits(b.cmd, 0.0)) {
        throw PolicyFileError("policy command outside the robot limits");
      }
      d_set.insert(b.d_lo);
      d_set.insert(b.d_hi);
      th_set.insert(b.theta_lo);
      th_set.insert(b.theta_hi);
    }
    d_edges_.assign(d_set.begin(), d_set.end());
    theta_edges_.assign(th_set.begin(), th_set.end());
    const std::size_t nd = d_edges_.size() - 1;
    const std::size_t nt = theta_edges_.size() - 1;
    if (bins.size() != nd * nt) {
      throw PolicyFileError("policy bins do not tile the state box");
    }
    table_.assign(nd * nt, ControlCommand{});
    std::vector<bool> seen(nd * nt, false);
    for (const auto &b : bins) {
      const auto i = index_of(d_edges_, b.d_lo);
      const auto j = index_of(theta_edges_, b.theta_lo);
      if (d_edges_[i + 1] != b.d_hi || theta_edges_[j + 1] != b.theta_hi) {
        throw PolicyFileError("policy bin spans more than one grid interval");
      }
      const std::size_t k = i * nt + j;
      if (seen[k]) {
        throw PolicyFileError("policy bins overlap");
      }
      seen[k] = true;
      table_[k] = b.cmd;
    }
  }

  static std::size_t index_of(const std::vector<double> &edges, double v)
  {
    return static_cast<std::size_t>(std::distance(edges.begin(), std::lower_bound(edges.begin(), edges.end(), v)));
  }

  RobotLimits limits_;
  std::vector<double> d_edges_;
  std::vector<double> theta_edges_;
  std::vector<ControlCommand> table_;
};

}  // namespace simplex_track

#endif  // SIMPLEX_TRACK__CONTROLLERS_HPP_
