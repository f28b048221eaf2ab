#ifndef SIMPLEX_TRACK__PATH_HPP_
#define SIMPLEX_TRACK__PATH_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "simplex_track/kinematics.hpp"

namespace simplex_track
{

struct Vec2
{
  double x{0.0};
  double y{0.0};

  bool operator==(const Vec2 &) const = default;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

class PathError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Immutable waypoint polyline with precomputed arclength and segment tangents.
class Path
{
public:
  static constexpr double kMinSegmentLength = 1e-9;

  explicit Path(std::vector<Vec2> waypoints) : waypoints_(std::move(waypoints))
  {
    if (waypoints_.size() < 2) {
      throw PathError("path needs at least two waypoints");
    }
    cumulative_.reserve(waypoints_.size());
    cumulative_.push_back(0.0);
    for (std::size_t i = 0; i < waypoints_.size(); ++i) {
      if (!std::isfinite(waypoints_[i].x) || !std::isfinite(waypoints_[i].y)) {
        throw PathError("waypoint " + std::to_string(i) + " is not finite");
      }
      if (i == 0) {
        continue;
      }
      const Vec2 delta = waypoints_[i] - waypoints_[i - 1];
      const double len = norm(delta);
      if (!(len > kMinSegmentLength)) {
        throw PathError("segment " + std::to_string(i - 1) + " is degenerate");
      }
      cumulative_.push_back(cumulative_.back() + len);
      lengths_.push_back(len);
      tangents_.push_back((1.0 / len) * delta);
      headings_.push_back(std::atan2(delta.y, delta.x));
    }
  }

  const std::vector<Vec2> &waypoints() const { return waypoints_; }
  const std::vector<double> &cumulative_arclength() const { return cumulative_; }
  std::size_t segment_count() const { return lengths_.size(); }
  double length() const { return cumulative_.back(); }
  double segment_length(std::size_t i) const { return lengths_[i]; }
  double segment_start(std::size_t i) const { return cumulative_[i]; }
  Vec2 tangent(std::size_t i) const { return tangents_[i]; }
  double heading(std::size_t i) const { return headings_[i]; }
  Vec2 front() const { return waypoints_.front(); }
  Vec2 back() const { return waypoints_.back(); }

  /// Segment containing arclength s (clamped; a shared vertex belongs to the later segment).
  std::size_t segment_at(double s) const
  {
    if (s <= 0.0) {
      return 0;
    }
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
    const auto idx = static_cast<std::size_t>(std::distance(cumulative_.begin(), it));
    return std::min(idx == 0 ? 0 : idx - 1, segment_count() - 1);
  }

  Vec2 point_at(double s) const
  {
    const std::size_t i = segment_at(s);
    const double r = std::clamp(s - cumulative_[i], 0.0, lengths_[i]);
    return waypoints_[i] + r * tangents_[i];
  }

  /// Subdivides every segment into equal pieces no longer than spacing. Original vertices are kept.
  Path densified(double spacing) const
  {
    if (!(spacing > 0.0)) {
      throw PathError("densification spacing must be positive");
    }
    std::vector<Vec2> out;
    out.push_back(waypoints_.front());
    for (std::size_t i = 0; i < segment_count(); ++i) {
      const auto pieces = static_cast<std::size_t>(std::max(1.0, std::ceil(lengths_[i] / spacing - 1e-9)));
      for (std::size_t k = 1; k < pieces; ++k) {
        const double f = static_cast<double>(k) / static_cast<double>(pieces);
        out.push_back(waypoints_[i] + f * (waypoints_[i + 1] - waypoints_[i]));
      }
      out.push_back(waypoints_[i + 1]);
    }
    return Path(std::move(out));
  }

private:
  std::vector<Vec2> waypoints_;
  std::vector<double> cumulative_;
  std::vector<double> lengths_;
  std::vector<Vec2> tangents_;
  std::vector<double> headings_;
};

/// Robot state expressed relative to the path.
struct PathFrame
{
  double d_signed{0.0};         ///< cross-track distance [m], positive left of travel direction
  double theta_rel{0.0};        ///< heading minus segment tangent heading, wrapped [rad]
  std::size_t segment_index{0};
  double arclength{0.0};        ///< progress of the projected point [m]
  double r_p{0.0};              ///< offset of the projected point along its segment [m]
  Vec2 projected{};
};

namespace detail
{
struct SegmentHit
{
  std::size_t index{0};
  double r{0.0};
  double dist_sq{std::numeric_limits<double>::infinity()};
};

inline SegmentHit nearest_on_segments(const Path &path, Vec2 position, std::size_t first, std::size_t last)
{
  SegmentHit best;
  for (std::size_t i = first; i <= last; ++i) {
    const Vec2 a = path.waypoints()[i];
    const double r = std::clamp(dot(position - a, path.tangent(i)), 0.0, path.segment_length(i));
    const Vec2 q = a + r * path.tangent(i);
    const Vec2 e = position - q;
    const double dsq = dot(e, e);
    // Ties go to the later segment so progress never jumps backward at corners.
    if (dsq <= best.dist_sq * (1.0 + 1e-12) + 1e-24) {
      best = {i, r, dsq};
    }
  }
  return best;
}

inline PathFrame frame_from_hit(const Path &path, const SegmentHit &hit, Vec2 position, double heading)
{
  PathFrame f;
  f.segment_index = hit.index;
  f.r_p = hit.r;
  f.arclength = path.segment_start(hit.index) + hit.r;
  f.projected = path.waypoints()[hit.index] + hit.r * path.tangent(hit.index);
  const double dist = std::sqrt(hit.dist_sq);
  f.d_signed = cross(path.tangent(hit.index), position - f.projected) < 0.0 ? -dist : dist;
  f.theta_rel = wrap_angle(heading - path.heading(hit.index));
  return f;
}
}  // namespace detail

/// Global closest-point projection of a robot position (and heading) onto the polyline.
inline PathFrame project(const Path &path, Vec2 position, double heading = 0.0)
{
  const auto hit = detail::nearest_on_segments(path, position, 0, path.segment_count() - 1);
  return detail::frame_from_hit(path, hit, position, heading);
}

/**
 * Closest-point projection restricted to the arclength window
 * [s_hint - behind, s_hint + ahead]. Closed-loop simulation uses this so that
 * progress stays on the current lap of self-overlapping tracks.
 */
inline PathFrame project_near(const Path &path, Vec2 position, double heading, double s_hint,
                              double behind = 2.0, double ahead = 4.0)
{
  const std::size_t first = path.segment_at(s_hint - behind);
  const std::size_t last = path.segment_at(s_hint + ahead);
  const auto hit = detail::nearest_on_segments(path, position, first, last);
  return detail::frame_from_hit(path, hit, position, heading);
}

struct Lookahead
{
  Vec2 point{};
  bool on_circle{false};  ///< false when the end-of-path fallback was taken
};

/**
 * First intersection of the circle of radius L around the robot with the
 * polyline, strictly ahead of the projected arclength. Falls back to the final
 * waypoint when the circle does not cut the remaining path.
 */
inline Lookahead lookahead_point(const Path &path, const PathFrame &frame, Vec2 robot, double L)
{
  if (!(L > 0.0)) {
    throw std::invalid_argument("lookahead distance must be positive");
  }
  const double r_sq = L * L;
  for (std::size_t i = frame.segment_index; i < path.segment_count(); ++i) {
    const Vec2 a = path.waypoints()[i];
    const Vec2 t = path.tangent(i);
    const double len = path.segment_length(i);
    // |a + r t - robot|^2 = L^2  =>  r^2 + 2 b r + c = 0
    const Vec2 w = a - robot;
    const double b = dot(w, t);
    const double c = dot(w, w) - r_sq;
    const double disc = b * b - c;
    if (disc < 0.0) {
      continue;
    }
    const double sq = std::sqrt(disc);
    const double min_r = (i == frame.segment_index) ? frame.r_p : -1.0;
    for (const double r : {-b - sq, -b + sq}) {
      if (r >= 0.0 && r <= len && r > min_r) {
        return {a + r * t, true};
      }
    }
  }
  return {path.back(), false};
}

/// Pose at arclength s with lateral offset d (left positive) and heading offset theta_rel.
inline Pose pose_on_path(const Path &path, double s, double d, double theta_rel)
{
  const std::size_t i = path.segment_at(s);
  const Vec2 t = path.tangent(i);
  const Vec2 n{-t.y, t.x};
  const Vec2 p = path.point_at(s) + d * n;
  return {p.x, p.y, wrap_angle(path.heading(i) + theta_rel)};
}

/// Uniform double in [0, 1) drawn from the top 53 bits; identical on every platform.
inline double unit_uniform(std::mt19937_64 &rng)
{
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_in(std::mt19937_64 &rng, double lo, double hi)
{
  return lo + (hi - lo) * unit_uniform(rng);
}

/// SplitMix64 finalizer; derives independent stream seeds from (base, index).
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index)
{
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/**
 * Seeded random polyline: starts at the origin heading +x, every following
 * segment turns by a uniform angle in [-turn_limit, turn_limit].
 */
inline Path generate_random_path(std::uint64_t seed, std::size_t n_waypoints, double turn_limit = 0.5,
                                 double segment_length = 1.0)
{
  if (n_waypoints < 2) {
    throw PathError("random path needs at least two waypoints");
  }
  if (!(segment_length > 0.0) || !(turn_limit >= 0.0)) {
    throw PathError("random path: invalid segment length or turn limit");
  }
  std::mt19937_64 rng(seed);
  std::vector<Vec2> pts;
  pts.reserve(n_waypoints);
  pts.push_back({0.0, 0.0});
  double heading = 0.0;
  for (std::size_t i = 1; i < n_waypoints; ++i) {
    if (i > 1) {
      heading += uniform_in(rng, -turn_limit, turn_limit);
    }
    pts.push_back(pts.back() + segment_length * Vec2{std::cos(heading), std::sin(heading)});
  }
  return Path(std::move(pts));
}

struct TrackParams
{
  double spacing{0.5};            ///< densification [m]
  double square_width{10.0};      ///< sideways leg [m]
  double square_height{7.5};      ///< downward leg [m]
  int square_laps{2};
  double cosine_amplitude{2.0};   ///< [m]
  double cosine_wavelength{20.0}; ///< [m]
  double cosine_span{60.0};       ///< [m] along x
};

/// Clockwise rectangular circuit starting at the origin heading +x, repeated for the configured laps.
inline Path square_track(const TrackParams &p = {})
{
  std::vector<Vec2> corners{{0.0, 0.0}};
  for (int lap = 0; lap < p.square_laps; ++lap) {
    corners.push_back({p.square_width, 0.0});
    corners.push_back({p.square_width, -p.square_height});
    corners.push_back({0.0, -p.square_height});
    corners.push_back({0.0, 0.0});
  }
  return Path(std::move(corners)).densified(p.spacing);
}

/// y = A cos(2 pi x / wavelength), sampled every `spacing` meters in x.
inline Path cosine_track(const TrackParams &p = {})
{
  const auto n = static_cast<std::size_t>(std::floor(p.cosine_span / p.spacing + 1e-9));
  const double k = 2.0 * std::numbers::pi / p.cosine_wavelength;
  std::vector<Vec2> pts;
  pts.reserve(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    const double x = static_cast<double>(i) * p.spacing;
    pts.push_back({x, p.cosine_amplitude * std::cos(k * x)});
  }
  return Path(std::move(pts));
}

inline void save_path_csv(const Path &path, std::ostream &out)
{
  char buf[64];
  for (const Vec2 &p : path.waypoints()) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", p.x, p.y);
    out << buf;
  }
}

inline Path load_path_csv(std::istream &in)
{
  std::vector<Vec2> pts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") {
      continue;
    }
    std::istringstream ls(line);
    Vec2 p;
    char comma = 0;
    if (!(ls >> p.x >> comma >> p.y) || comma != ',') {
      throw PathError("path csv line " + std::to_string(lineno) + ": expected 'x,y'");
    }
    ls >> std::ws;
    if (!ls.eof()) {
      throw PathError("path csv line " + std::to_string(lineno) + ": trailing data");
    }
    pts.push_back(p);
  }
  return Path(std::move(pts));
}

inline Path load_path_csv(const std::string &file)
{
  std::ifstream in(file);
  if (!in) {
    throw PathError("cannot open path file " + file);
  }
  return load_path_csv(in);
}

}  // namespace simplex_track

#endif  // SIMPLEX_TRACK__PATH_HPP_
