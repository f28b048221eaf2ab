#ifndef SIMPLEX_TRACK__KINEMATICS_HPP_
#define SIMPLEX_TRACK__KINEMATICS_HPP_

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace simplex_track
{

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double angle)
{
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double wrapped = std::remainder(angle, kTwoPi);  // [-pi, pi]
  if (wrapped <= -std::numbers::pi) {
    wrapped += kTwoPi;
  }
  return wrapped;
}

/// Planar robot configuration. Heading is kept in (-pi, pi].
struct Pose
{
  double x{0.0};      ///< [m]
  double y{0.0};      ///< [m]
  double theta{0.0};  ///< [rad]

  bool operator==(const Pose &) const = default;
};

/// Actuation pair (v, omega) of the differential drive.
struct ControlCommand
{
  double v{0.0};      ///< linear velocity [m/s]
  double omega{0.0};  ///< angular velocity [rad/s]

  bool operator==(const ControlCommand &) const = default;
};

/// Physical limits of the robot and the controller cadence.
struct RobotLimits
{
  double v_max{1.0};           ///< [m/s]
  double omega_max{0.5};       ///< [rad/s]
  double control_period{0.05}; ///< [s]

  /// Largest distance the robot can cover within one control period.
  double step_motion_bound() const { return v_max * control_period; }

  void validate() const
  {
    if (!(v_max > 0.0) || !(omega_max > 0.0) || !(control_period > 0.0) ||
        !std::isfinite(v_max) || !std::isfinite(omega_max) || !std::isfinite(control_period)) {
      throw std::invalid_argument("RobotLimits: all limits must be finite and strictly positive");
    }
  }

  /// True when cmd lies inside the actuation box (with a tiny tolerance for rounding).
  bool admits(const ControlCommand &cmd, double tol = 1e-12) const
  {
    return std::isfinite(cmd.v) && std::isfinite(cmd.omega) && cmd.v >= -tol &&
           cmd.v <= v_max + tol && std::abs(cmd.omega) <= omega_max + tol;
  }

  ControlCommand clamp(const ControlCommand &cmd) const
  {
    return {std::clamp(cmd.v, 0.0, v_max), std::clamp(cmd.omega, -omega_max, omega_max)};
  }
};

inline bool is_finite(const Pose &pose)
{
  return std::isfinite(pose.x) && std::isfinite(pose.y) && std::isfinite(pose.theta);
}

namespace detail
{
inline void check_step_inputs(const Pose &pose, const ControlCommand &cmd, double dt, const char *who)
{
  if (!is_finite(pose) || !std::isfinite(cmd.v) || !std::isfinite(cmd.omega) || !std::isfinite(dt)) {
    throw std::invalid_argument(std::string(who) + ": non-finite input");
  }
  if (!(dt > 0.0)) {
    throw std::invalid_argument(std::string(who) + ": dt must be positive");
  }
}
}  // namespace detail

/**
 * Advances the unicycle model
 *   x' = v cos(theta),  y' = v sin(theta),  theta' = omega
 * by one classical fourth-order Runge-Kutta step of length dt with the
 * command held constant. The returned heading is wrapped.
 */
inline Pose step(const Pose &pose, const ControlCommand &cmd, double dt)
{
  detail::check_step_inputs(pose, cmd, dt, "step");

  // theta evolves linearly under a held command, so the stage headings are exact
  // and only the position components need the RK weights.
  const double th1 = pose.theta;
  const double th2 = pose.theta + 0.5 * dt * cmd.omega;
  const double th4 = pose.theta + dt * cmd.omega;
  const double c1 = std::cos(th1), s1 = std::sin(th1);
  const double c2 = std::cos(th2), s2 = std::sin(th2);
  const double c4 = std::cos(th4), s4 = std::sin(th4);

  // k2 and k3 share the midpoint heading.
  Pose next;
  next.x = pose.x + dt * cmd.v * (c1 + 4.0 * c2 + c4) / 6.0;
  next.y = pose.y + dt * cmd.v * (s1 + 4.0 * s2 + s4) / 6.0;
  next.theta = wrap_angle(th4);
  return next;
}

/// Closed-form solution of the unicycle model under a constant command.
inline Pose integrate_arc_exact(const Pose &pose, const ControlCommand &cmd, double dt)
{
  detail::check_step_inputs(pose, cmd, dt, "integrate_arc_exact");
  constexpr double kStraightEps = 1e-9;

  Pose next;
  if (std::abs(cmd.omega) < kStraightEps) {
    next.x = pose.x + cmd.v * dt * std::cos(pose.theta);
    next.y = pose.y + cmd.v * dt * std::sin(pose.theta);
    next.theta = wrap_angle(pose.theta + cmd.omega * dt);
    return next;
  }
  const double radius = cmd.v / cmd.omega;
  const double th_end = pose.theta + cmd.omega * dt;
  next.x = pose.x + radius * (std::sin(th_end) - std::sin(pose.theta));
  next.y = pose.y - radius * (std::cos(th_end) - std::cos(pose.theta));
  next.theta = wrap_angle(th_end);
  return next;
}

}  // namespace simplex_track

#endif  // SIMPLEX_TRACK__KINEMATICS_HPP_
