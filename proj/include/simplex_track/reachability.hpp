#ifndef SIMPLEX_TRACK__REACHABILITY_HPP_
#define SIMPLEX_TRACK__REACHABILITY_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "simplex_track/controllers.hpp"
#include "simplex_track/kinematics.hpp"
#include "simplex_track/parallel.hpp"
#include "simplex_track/path.hpp"

namespace simplex_track
{

class SweepError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class SafeSetError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Uniform grid min, min + step, ..., min + (count - 1) step. Each value owns a cell of width step.
struct GridAxis
{
  double min{0.0};
  double step{1.0};
  std::size_t count{1};

  static GridAxis from_range(double lo, double hi, double step)
  {
    if (!(step > 0.0) || !std::isfinite(lo) || !std::isfinite(hi) || hi < lo) {
      throw std::invalid_argument("grid axis: need finite lo <= hi and step > 0");
    }
    return {lo, step, static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1};
  }

  double value(std::size_t i) const { return min + static_cast<double>(i) * step; }

  /// Index of the cell containing v; empty outside the grid box.
  std::optional<std::size_t> index_of(double v) const
  {
    if (!std::isfinite(v)) {
      return std::nullopt;
    }
    const double k = std::round((v - min) / step);
    if (k < 0.0 || k >= static_cast<double>(count)) {
      return std::nullopt;
    }
    return static_cast<std::size_t>(k);
  }

  bool operator==(const GridAxis &) const = default;
};

struct SweepConfig
{
  double d0_min{-1.0}, d0_max{1.0}, d0_step{0.1};
  double theta0_min{-1.5708}, theta0_max{1.5708}, theta0_step{0.05};
  double rp_min{0.0}, rp_max{0.4}, rp_step{0.05};
  double horizon{15.0};
  double step_size{0.05};
  std::size_t n_paths{100};
  std::size_t n_waypoints{50};
  double conv_dist{0.1};
  double conv_hold{1.5};
  std::uint64_t path_seed{2024};
  double turn_limit{0.5};
  double segment_length{1.0};
  double spacing{0.5};
  double runaway_distance{10.0};

  /// Coarse grid with ten paths; exercises every code path quickly.
  static SweepConfig quick()
  {
    SweepConfig c;
    c.d0_step = 0.2;
    c.theta0_step = 0.2;
    c.rp_step = 0.1;
    c.n_paths = 10;
    return c;
  }

  GridAxis d_axis() const { return GridAxis::from_range(d0_min, d0_max, d0_step); }
  GridAxis theta_axis() const { return GridAxis::from_range(theta0_min, theta0_max, theta0_step); }
  GridAxis rp_axis() const { return GridAxis::from_range(rp_min, rp_max, rp_step); }
  std::size_t steps() const { return static_cast<std::size_t>(std::llround(horizon / step_size)); }
  std::size_t hold_steps() const { return static_cast<std::size_t>(std::llround(conv_hold / step_size)); }
  std::size_t initial_state_count() const { return d_axis().count * theta_axis().count * rp_axis().count; }
  std::size_t record_count() const { return initial_state_count() * n_paths; }

  void validate() const
  {
    auto fail = [](const std::string &field, const std::string &why) {
      throw std::invalid_argument("sweep." + field + ": " + why);
    };
    if (!(step_size > 0.0) || !std::isfinite(step_size)) fail("step_size", "must be positive");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) fail("horizon", "must be positive");
    if (std::abs(horizon / step_size - std::round(horizon / step_size)) > 1e-9) {
      fail("step_size", "must divide the horizon");
    }
    if (!(conv_hold > 0.0) || !(conv_hold < horizon)) fail("conv_hold", "must lie in (0, horizon)");
    if (!(conv_dist > 0.0)) fail("conv_dist", "must be positive");
    if (!(d0_step > 0.0) || d0_max < d0_min) fail("d0_step", "invalid d0 grid");
    if (!(theta0_step > 0.0) || theta0_max < theta0_min) fail("theta0_step", "invalid theta0 grid");
    if (!(rp_step > 0.0) || rp_max < rp_min || rp_min < 0.0) fail("rp_step", "invalid rp grid");
    if (n_paths == 0) fail("n_paths", "must be at least 1");
    if (n_waypoints < 2) fail("n_waypoints", "must be at least 2");
    if (!(segment_length > 0.0)) fail("segment_length", "must be positive");
    if (!(turn_limit >= 0.0)) fail("turn_limit", "must be non-negative");
    if (!(spacing > 0.0)) fail("spacing", "must be positive");
    if (rp_max > std::min(segment_length, spacing)) fail("rp_max", "must stay on the first segment");
    if (!(runaway_distance > conv_dist)) fail("runaway_distance", "must exceed conv_dist");
  }
};

/// Densified random path number `id` of a sweep.
inline Path sweep_path(const SweepConfig &config, std::size_t id)
{
  return generate_random_path(mix_seed(config.path_seed, id), config.n_waypoints, config.turn_limit,
                              config.segment_length)
      .densified(config.spacing);
}

struct SweepRecord
{
  std::size_t i_d{0}, i_theta{0}, i_rp{0};
  double d0{0.0};
  double theta0{0.0};
  double rp{0.0};
  std::size_t path_id{0};
  bool converged{false};
  double max_d{0.0};
  std::optional<double> t_conv;

  bool operator==(const SweepRecord &) const = default;
};

struct ConvergenceOutcome
{
  bool converged{false};
  double max_d{0.0};
  std::optional<double> t_conv;
};

/**
 * Closed-loop run from (d0, theta0) at arclength rp on the first segment.
 * Converged means |d| <= conv_dist held at every sample of a conv_hold window
 * inside the horizon; t_conv is the start of the first such window.
 */
inline ConvergenceOutcome simulate_convergence(const Path &path, const Controller &controller,
                                               const SweepConfig &config, double d0, double theta0, double rp)
{
  const std::size_t n_steps = config.steps();
  const std::size_t hold = config.hold_steps();
  const double dt = config.step_size;

  Pose pose = pose_on_path(path, rp, d0, theta0);
  PathFrame frame = project_near(path, {pose.x, pose.y}, pose.theta, rp);

  ConvergenceOutcome out;
  std::size_t run_start = 0;
  bool in_run = false;
  for (std::size_t k = 0;; ++k) {
    const double dist = std::abs(frame.d_signed);
    if (!std::isfinite(dist)) {
      throw SweepError("non-finite state");
    }
    out.max_d = std::max(out.max_d, dist);
    if (dist > config.runaway_distance) {
      out.converged = false;
      out.t_conv.reset();
      return out;
    }
    if (dist <= config.conv_dist) {
      if (!in_run) {
        in_run = true;
        run_start = k;
      }
      if (!out.converged && k - run_start >= hold) {
        out.converged = true;
        out.t_conv = static_cast<double>(run_start) * dt;
      }
    } else {
      in_run = false;
    }
    if (k == n_steps) {
      break;
    }
    const double t = static_cast<double>(k) * dt;
    const ControlCommand cmd = controller.compute({pose, frame, path, t});
    pose = step(pose, cmd, dt);
    frame = project_near(path, {pose.x, pose.y}, pose.theta, frame.arclength);
  }
  return out;
}

/**
 * Full grid sweep: one record per (d0, theta0, rp, path). Records are ordered
 * by (i_d, i_theta, i_rp, path_id) independently of the worker count.
 */
inline std::vector<SweepRecord> run_sweep(const SweepConfig &config, const Controller &controller,
                                          unsigned workers = 0)
{
  config.validate();
  const GridAxis da = config.d_axis();
  const GridAxis ta = config.theta_axis();
  const GridAxis ra = config.rp_axis();

  std::vector<Path> paths;
  paths.reserve(config.n_paths);
  for (std::size_t p = 0; p < config.n_paths; ++p) {
    paths.push_back(sweep_path(config, p));
  }

  const std::size_t np = config.n_paths;
  std::vector<SweepRecord> records(config.record_count());
  parallel_for(records.size(), workers, [&](std::size_t idx) {
    SweepRecord r;
    r.path_id = idx % np;
    std::size_t rest = idx / np;
    r.i_rp = rest % ra.count;
    rest /= ra.count;
    r.i_theta = rest % ta.count;
    r.i_d = rest / ta.count;
    r.d0 = da.value(r.i_d);
    r.theta0 = ta.value(r.i_theta);
    r.rp = ra.value(r.i_rp);
    ConvergenceOutcome o;
    try {
      o = simulate_convergence(paths[r.path_id], controller, config, r.d0, r.theta0, r.rp);
    } catch (const std::exception &e) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "sweep cell d0=%.4f theta0=%.4f rp=%.3f path=%zu: ", r.d0, r.theta0, r.rp,
                    r.path_id);
      throw SweepError(buf + std::string(e.what()));
    }
    r.converged = o.converged;
    r.max_d = o.max_d;
    r.t_conv = o.t_conv;
    records[idx] = r;
  }, 16);
  return records;
}

// ---------------------------------------------------------------------------
// Records CSV

inline void write_records_csv(const std::vector<SweepRecord> &records, std::ostream &out)
{
  out << "d0,theta0,rp,path_id,converged,max_d,t_conv\n";
  char buf[192];
  for (const auto &r : records) {
    int n = std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%zu,%d,%.17g,", r.d0, r.theta0, r.rp, r.path_id,
                          r.converged ? 1 : 0, r.max_d);
    if (r.t_conv) {
      std::snprintf(buf + n, sizeof(buf) - static_cast<std::size_t>(n), "%.17g", *r.t_conv);
    }
    out << buf << '\n';
  }
}

/// Reads records and re-derives grid indices from the config axes.
inline std::vector<SweepRecord> read_records_csv(std::istream &in, const SweepConfig &config)
{
  const GridAxis da = config.d_axis();
  const GridAxis ta = config.theta_axis();
  const GridAxis ra = config.rp_axis();
  std::vector<SweepRecord> out;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line) || line.rfind("d0,theta0,rp,path_id,converged,max_d,t_conv", 0) != 0) {
    throw SweepError("records csv: missing header");
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      f.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
      f.emplace_back();
    }
    if (f.size() != 7) {
      throw SweepError("records csv line " + std::to_string(lineno) + ": expected 7 fields");
    }
    SweepRecord r;
    try {
      r.d0 = std::stod(f[0]);
      r.theta0 = std::stod(f[1]);
      r.rp = std::stod(f[2]);
      r.path_id = std::stoul(f[3]);
      r.converged = f[4] == "1";
      r.max_d = std::stod(f[5]);
      if (!f[6].empty()) {
        r.t_conv = std::stod(f[6]);
      }
    } catch (const std::exception &) {
      throw SweepError("records csv line " + std::to_string(lineno) + ": malformed number");
    }
    const auto id = da.index_of(r.d0);
    const auto it = ta.index_of(r.theta0);
    const auto ir = ra.index_of(r.rp);
    if (!id || !it || !ir || r.path_id >= config.n_paths) {
      throw SweepError("records csv line " + std::to_string(lineno) + ": state outside the sweep grid");
    }
    if (r.converged != r.t_conv.has_value()) {
      throw SweepError("records csv line " + std::to_string(lineno) + ": t_conv must be present iff converged");
    }
    r.i_d = *id;
    r.i_theta = *it;
    r.i_rp = *ir;
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Per-cell aggregation over rp and paths

struct CellAggregate
{
  std::size_t n{0};
  std::size_t n_converged{0};
  double worst_max_d{0.0};
  double worst_t_conv{0.0};  ///< over converged records

  bool all_converged() const { return n > 0 && n == n_converged; }
};

/// Worst case over rp and paths for every (d0, theta0) cell, row-major in (i_d, i_theta).
inline std::vector<CellAggregate> aggregate_cells(const std::vector<SweepRecord> &records, const SweepConfig &config)
{
  const std::size_t nd = config.d_axis().count;
  const std::size_t nt = config.theta_axis().count;
  const std::size_t per_cell = config.rp_axis().count * config.n_paths;
  std::vector<CellAggregate> cells(nd * nt);
  for (const auto &r : records) {
    if (r.i_d >= nd || r.i_theta >= nt) {
      throw SafeSetError("record outside the grid");
    }
    auto &c = cells[r.i_d * nt + r.i_theta];
    ++c.n;
    c.worst_max_d = std::max(c.worst_max_d, r.max_d);
    if (r.converged) {
      ++c.n_converged;
      c.worst_t_conv = std::max(c.worst_t_conv, *r.t_conv);
    }
  }
  for (const auto &c : cells) {
    if (c.n != per_cell) {
      throw SafeSetError("records do not cover the full grid");
    }
  }
  return cells;
}

// ---------------------------------------------------------------------------
// Digital convexity on the (i_d, i_theta) lattice.
//
// A cell set is convex when it equals the set of lattice points inside the
// convex hull of its members. This implies that every lattice point on a
// segment between two members is a member.

namespace lattice
{
struct Point
{
  long x, y;
  bool operator<(const Point &o) const { return x != o.x ? x < o.x : y < o.y; }
  bool operator==(const Point &) const = default;
};

inline long cross3(const Point &o, const Point &a, const Point &b)
{
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

/// Strict hull vertices, counter-clockwise. Input must be sorted and unique.
inline std::vector<Point> hull(const std::vector<Point> &pts)
{
  if (pts.size() < 3) {
    return pts;
  }
  std::vector<Point> h(2 * pts.size());
  std::size_t k = 0;
  for (const auto &p : pts) {
    while (k >= 2 && cross3(h[k - 2], h[k - 1], p) <= 0) --k;
    h[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross3(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  return h;
}

/// Number of lattice points inside or on the hull polygon.
inline std::size_t count_inside(const std::vector<Point> &h)
{
  if (h.empty()) {
    return 0;
  }
  if (h.size() == 1) {
    return 1;
  }
  long ymin = h[0].y, ymax = h[0].y;
  for (const auto &p : h) {
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  std::size_t total = 0;
  for (long y = ymin; y <= ymax; ++y) {
    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < h.size(); ++i) {
      const Point &a = h[i];
      const Point &b = h[(i + 1) % h.size()];
      if (y < std::min(a.y, b.y) || y > std::max(a.y, b.y)) {
        continue;
      }
      if (a.y == b.y) {
        lo = std::min({lo, static_cast<double>(a.x), static_cast<double>(b.x)});
        hi = std::max({hi, static_cast<double>(a.x), static_cast<double>(b.x)});
      } else {
        // exact for small integers: a non-integer quotient is at least 1/|dy| away from an integer
        const double x = static_cast<double>(a.x) +
                         static_cast<double>((y - a.y) * (b.x - a.x)) / static_cast<double>(b.y - a.y);
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
    }
    if (hi >= lo) {
      const long first = static_cast<long>(std::ceil(lo - 1e-9));
      const long last = static_cast<long>(std::floor(hi + 1e-9));
      if (last >= first) {
        total += static_cast<std::size_t>(last - first + 1);
      }
    }
  }
  return total;
}

inline std::size_t holes(const std::vector<Point> &sorted_pts)
{
  return count_inside(hull(sorted_pts)) - sorted_pts.size();
}

inline bool is_convex(const std::vector<Point> &sorted_pts)
{
  return holes(sorted_pts) == 0;
}
}  // namespace lattice

// ---------------------------------------------------------------------------

/// A retained (d0, theta0) cell with its worst case over rp and paths.
struct SafeCell
{
  std::size_t i_d{0};
  std::size_t i_theta{0};
  double worst_max_d{0.0};
  double worst_t_conv{0.0};

  bool operator==(const SafeCell &) const = default;
};

/**
 * Safe set over (d_signed, theta_rel): region-of-attraction cells that meet the
 * safety bound, made convex, plus the shrunk subset used for switching and the
 * dwell time derived from it.
 *
 * Shrunk cells are retained cells whose worst deviation is within
 * shrunk_max_d and whose eight neighbours are all retained, so one control
 * period of motion from a shrunk cell cannot leave the retained set.
 */
class SafeSet
{
public:
  static constexpr int kFormatVersion = 1;

  SafeSet() = default;

  /// Derives the scalar fields and the shrunk subset, then validates every invariant.
  static SafeSet from_retained(GridAxis d_axis, GridAxis theta_axis, std::vector<SafeCell> retained,
                               double safety_bound, double step_motion_bound, std::uint64_t path_seed)
  {
    SafeSet s;
    s.d_axis_ = d_axis;
    s.theta_axis_ = theta_axis;
    s.safety_bound_ = safety_bound;
    s.step_motion_bound_ = step_motion_bound;
    s.path_seed_ = path_seed;
    std::sort(retained.begin(), retained.end(), [](const SafeCell &a, const SafeCell &b) {
      return a.i_d != b.i_d ? a.i_d < b.i_d : a.i_theta < b.i_theta;
    });
    s.cells_ = std::move(retained);
    s.derive();
    return s;
  }

  const GridAxis &d_axis() const { return d_axis_; }
  const GridAxis &theta_axis() const { return theta_axis_; }
  const std::vector<SafeCell> &cells() const { return cells_; }
  double set_max_d() const { return set_max_d_; }
  double shrunk_max_d() const { return shrunk_max_d_; }
  double dwell_time() const { return dwell_time_; }
  double safety_bound() const { return safety_bound_; }
  double step_motion_bound() const { return step_motion_bound_; }
  std::uint64_t path_seed() const { return path_seed_; }
  std::size_t shrunk_count() const { return static_cast<std::size_t>(std::count(shrunk_.begin(), shrunk_.end(), true)); }

  bool retained_at(std::size_t i_d, std::size_t i_theta) const { return retained_[i_d * theta_axis_.count + i_theta]; }
  bool shrunk_at(std::size_t i_d, std::size_t i_theta) const { return shrunk_[i_d * theta_axis_.count + i_theta]; }

  /// Membership in the shrunk set; false outside the grid box.
  bool contains(double d, double theta) const { return lookup(shrunk_, d, theta); }

  /// Membership in the retained (unshrunk) set.
  bool contains_unshrunk(double d, double theta) const { return lookup(retained_, d, theta); }

  bool operator==(const SafeSet &o) const
  {
    return d_axis_ == o.d_axis_ && theta_axis_ == o.theta_axis_ && cells_ == o.cells_ &&
           set_max_d_ == o.set_max_d_ && shrunk_max_d_ == o.shrunk_max_d_ && dwell_time_ == o.dwell_time_ &&
           safety_bound_ == o.safety_bound_ && step_motion_bound_ == o.step_motion_bound_ &&
           path_seed_ == o.path_seed_;
  }

  void save(std::ostream &out) const
  {
    char buf[256];
    out << "simplex_track_safe_set " << kFormatVersion << '\n';
    std::snprintf(buf, sizeof(buf), "d_axis %.17g %.17g %zu\n", d_axis_.min, d_axis_.step, d_axis_.count);
    out << buf;
    std::snprintf(buf, sizeof(buf), "theta_axis %.17g %.17g %zu\n", theta_axis_.min, theta_axis_.step,
                  theta_axis_.count);
    out << buf;
    std::snprintf(buf, sizeof(buf), "safety_bound %.17g\nstep_motion_bound %.17g\n", safety_bound_,
                  step_motion_bound_);
    out << buf;
    std::snprintf(buf, sizeof(buf), "set_max_d %.17g\nshrunk_max_d %.17g\ndwell_time %.17g\n", set_max_d_,
                  shrunk_max_d_, dwell_time_);
    out << buf;
    out << "path_seed " << path_seed_ << '\n';
    out << "cells " << cells_.size() << '\n';
    for (const auto &c : cells_) {
      std::snprintf(buf, sizeof(buf), "%zu,%zu,%.17g,%.17g\n", c.i_d, c.i_theta, c.worst_max_d, c.worst_t_conv);
      out << buf;
    }
    out << "end\n";
  }

  void save(const std::string &file) const
  {
    std::ofstream out(file, std::ios::binary);
    if (!out) {
      throw SafeSetError("cannot write safe set file " + file);
    }
    save(out);
    if (!out) {
      throw SafeSetError("failed writing safe set file " + file);
    }
  }

  static SafeSet load(std::istream &in)
  {
    auto expect_key = [&](const char *key) {
      std::string k;
      if (!(in >> k) || k != key) {
        throw SafeSetError(std::string("safe set file: expected '") + key + "'");
      }
    };
    int version = 0;
    expect_key("simplex_track_safe_set");
    if (!(in >> version) || version != kFormatVersion) {
      throw SafeSetError("safe set file: unsupported format version");
    }
    GridAxis da, ta;
    double bound = 0.0, motion = 0.0, max_d = 0.0, shrunk = 0.0, dwell = 0.0;
    std::uint64_t seed = 0;
    std::size_t n = 0;
    expect_key("d_axis");
    in >> da.min >> da.step >> da.count;
    expect_key("theta_axis");
    in >> ta.min >> ta.step >> ta.count;
    expect_key("safety_bound");
    in >> bound;
    expect_key("step_motion_bound");
    in >> motion;
    expect_key("set_max_d");
    in >> max_d;
    expect_key("shrunk_max_d");
    in >> shrunk;
    expect_key("dwell_time");
    in >> dwell;
    expect_key("path_seed");
    in >> seed;
    expect_key("cells");
    in >> n;
    if (!in || da.count == 0 || ta.count == 0 || !(da.step > 0.0) || !(ta.step > 0.0)) {
      throw SafeSetError("safe set file: malformed header");
    }
    std::vector<SafeCell> cells;
    cells.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::string line;
      if (!(in >> line)) {
        throw SafeSetError("safe set file: truncated cell list");
      }
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream ls(line);
      SafeCell c;
      if (!(ls >> c.i_d >> c.i_theta >> c.worst_max_d >> c.worst_t_conv)) {
        throw SafeSetError("safe set file: malformed cell line");
      }
      cells.push_back(c);
    }
    expect_key("end");

    SafeSet s = from_retained(da, ta, std::move(cells), bound, motion, seed);
    if (s.set_max_d_ != max_d || s.shrunk_max_d_ != shrunk || s.dwell_time_ != dwell) {
      throw SafeSetError("safe set file: stored scalars disagree with the cell data");
    }
    return s;
  }

  static SafeSet load(const std::string &file)
  {
    std::ifstream in(file);
    if (!in) {
      throw SafeSetError("cannot open safe set file " + file);
    }
    return load(in);
  }

private:
  bool lookup(const std::vector<bool> &mask, double d, double theta) const
  {
    const auto i = d_axis_.index_of(d);
    const auto j = theta_axis_.index_of(theta);
    return i && j && mask[*i * theta_axis_.count + *j];
  }

  void derive()
  {
    const std::size_t nd = d_axis_.count;
    const std::size_t nt = theta_axis_.count;
    if (!(safety_bound_ > 0.0) || !(step_motion_bound_ >= 0.0)) {
      throw SafeSetError("safe set: invalid safety bound or motion bound");
    }
    if (cells_.empty()) {
      throw SafeSetError("safe set is empty");
    }
    retained_.assign(nd * nt, false);
    std::vector<lattice::Point> pts;
    set_max_d_ = 0.0;
    for (const auto &c : cells_) {
      if (c.i_d >= nd || c.i_theta >= nt) {
        throw SafeSetError("safe set: cell outside the grid");
      }
      if (retained_[c.i_d * nt + c.i_theta]) {
        throw SafeSetError("safe set: duplicate cell");
      }
      if (!(c.worst_max_d >= 0.0) || !(c.worst_t_conv >= 0.0) || !std::isfinite(c.worst_max_d) ||
          !std::isfinite(c.worst_t_conv)) {
        throw SafeSetError("safe set: invalid cell statistics");
      }
      retained_[c.i_d * nt + c.i_theta] = true;
      pts.push_back({static_cast<long>(c.i_d), static_cast<long>(c.i_theta)});
      set_max_d_ = std::max(set_max_d_, c.worst_max_d);
    }
    if (!lattice::is_convex(pts)) {
      throw SafeSetError("safe set: retained cells are not convex");
    }
    if (!(set_max_d_ < safety_bound_)) {
      throw SafeSetError("safe set: worst deviation does not stay strictly below the safety bound");
    }
    shrunk_max_d_ = set_max_d_ - step_motion_bound_;

    shrunk_.assign(nd * nt, false);
    dwell_time_ = 0.0;
    bool any = false;
    for (const auto &c : cells_) {
      if (c.worst_max_d > shrunk_max_d_ || !neighbours_retained(c.i_d, c.i_theta)) {
        continue;
      }
      shrunk_[c.i_d * nt + c.i_theta] = true;
      dwell_time_ = std::max(dwell_time_, c.worst_t_conv);
      any = true;
    }
    if (!any) {
      throw SafeSetError("shrunk safe set is empty");
    }
  }

  bool neighbours_retained(std::size_t i, std::size_t j) const
  {
    for (long di = -1; di <= 1; ++di) {
      for (long dj = -1; dj <= 1; ++dj) {
        const long a = static_cast<long>(i) + di;
        const long b = static_cast<long>(j) + dj;
        if (a < 0 || b < 0 || a >= static_cast<long>(d_axis_.count) || b >= static_cast<long>(theta_axis_.count) ||
            !retained_[static_cast<std::size_t>(a) * theta_axis_.count + static_cast<std::size_t>(b)]) {
          return false;
        }
      }
    }
    return true;
  }

  GridAxis d_axis_{};
  GridAxis theta_axis_{};
  std::vector<SafeCell> cells_;
  std::vector<bool> retained_;
  std::vector<bool> shrunk_;
  double set_max_d_{0.0};
  double shrunk_max_d_{0.0};
  double dwell_time_{0.0};
  double safety_bound_{1.0};
  double step_motion_bound_{0.05};
  std::uint64_t path_seed_{0};
};

/**
 * Greedy convexification: while the hull of the kept cells encloses lattice
 * points that are not kept, drop the hull vertex whose removal leaves the
 * fewest such holes. Ties prefer the larger worst deviation, then the cell
 * farther from the grid centre, then the lower index.
 */
inline std::vector<SafeCell> convexify(std::vector<SafeCell> cells, const GridAxis &d_axis, const GridAxis &theta_axis)
{
  auto key = [](const SafeCell &c) { return lattice::Point{static_cast<long>(c.i_d), static_cast<long>(c.i_theta)}; };
  std::sort(cells.begin(), cells.end(), [&](const SafeCell &a, const SafeCell &b) { return key(a) < key(b); });
  const double cd = 0.5 * static_cast<double>(d_axis.count - 1);
  const double ct = 0.5 * static_cast<double>(theta_axis.count - 1);
  auto spread = [&](const SafeCell &c) {
    const double a = (static_cast<double>(c.i_d) - cd) / std::max(cd, 1.0);
    const double b = (static_cast<double>(c.i_theta) - ct) / std::max(ct, 1.0);
    return a * a + b * b;
  };

  std::vector<lattice::Point> pts;
  for (const auto &c : cells) pts.push_back(key(c));

  while (!pts.empty() && lattice::holes(pts) > 0) {
    const auto h = lattice::hull(pts);
    std::size_t best = pts.size();
    std::size_t best_holes = 0;
    for (const auto &v : h) {
      const auto pos =
          static_cast<std::size_t>(std::distance(pts.begin(), std::lower_bound(pts.begin(), pts.end(), v)));
      std::vector<lattice::Point> trial;
      trial.reserve(pts.size() - 1);
      trial.insert(trial.end(), pts.begin(), pts.begin() + static_cast<long>(pos));
      trial.insert(trial.end(), pts.begin() + static_cast<long>(pos) + 1, pts.end());
      const std::size_t hcount = lattice::holes(trial);
      bool better = best == pts.size() || hcount < best_holes;
      if (!better && hcount == best_holes) {
        const SafeCell &a = cells[pos];
        const SafeCell &b = cells[best];
        if (a.worst_max_d != b.worst_max_d) {
          better = a.worst_max_d > b.worst_max_d;
        } else if (spread(a) != spread(b)) {
          better = spread(a) > spread(b);
        } else {
          better = pos < best;
        }
      }
      if (better) {
        best = pos;
        best_holes = hcount;
      }
    }
    pts.erase(pts.begin() + static_cast<long>(best));
    cells.erase(cells.begin() + static_cast<long>(best));
  }
  return cells;
}

struct SafeSetSummary
{
  std::size_t grid_cells{0};
  std::size_t roa_cells{0};        ///< every record converged
  std::size_t safe_cells{0};       ///< roa cells within the safety bound
  std::size_t retained_cells{0};   ///< after convexification
  std::size_t shrunk_cells{0};
};

/**
 * Region of attraction (worst case over rp and paths) intersected with the
 * safety bound, made convex, then shrunk by the one-period motion bound.
 */
inline SafeSet build_safe_set(const std::vector<SweepRecord> &records, const SweepConfig &config, double safety_bound,
                              const RobotLimits &limits, SafeSetSummary *summary = nullptr)
{
  const GridAxis da = config.d_axis();
  const GridAxis ta = config.theta_axis();
  const auto agg = aggregate_cells(records, config);

  std::vector<SafeCell> candidates;
  std::size_t roa = 0;
  for (std::size_t i = 0; i < da.count; ++i) {
    for (std::size_t j = 0; j < ta.count; ++j) {
      const auto &c = agg[i * ta.count + j];
      if (!c.all_converged()) {
        continue;
      }
      ++roa;
      if (c.worst_max_d < safety_bound) {
        candidates.push_back({i, j, c.worst_max_d, c.worst_t_conv});
      }
    }
  }
  const std::size_t safe = candidates.size();
  if (candidates.empty()) {
    throw SafeSetError("no grid cell converges within the safety bound; the architecture is unusable");
  }
  auto retained = convexify(std::move(candidates), da, ta);
  SafeSet set = SafeSet::from_retained(da, ta, std::move(retained), safety_bound, limits.step_motion_bound(),
                                       config.path_seed);
  if (summary) {
    *summary = {da.count * ta.count, roa, safe, set.cells().size(), set.shrunk_count()};
  }
  return set;
}

/// Contour data over (d0, theta0): worst deviation and convergence per cell.
inline void write_contour_csv(const std::vector<SweepRecord> &records, const SweepConfig &config,
                              const SafeSet *set, std::ostream &out)
{
  const GridAxis da = config.d_axis();
  const GridAxis ta = config.theta_axis();
  const auto agg = aggregate_cells(records, config);
  out << "d0,theta0,worst_max_d,worst_t_conv,n_records,n_nonconverged,in_roa,retained,shrunk\n";
  char buf[256];
  for (std::size_t i = 0; i < da.count; ++i) {
    for (std::size_t j = 0; j < ta.count; ++j) {
      const auto &c = agg[i * ta.count + j];
      const bool retained = set && set->d_axis() == da && set->theta_axis() == ta && set->retained_at(i, j);
      const bool shrunk = set && set->d_axis() == da && set->theta_axis() == ta && set->shrunk_at(i, j);
      std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.2f,%zu,%zu,%d,%d,%d\n", da.value(i), ta.value(j),
                    c.worst_max_d, c.worst_t_conv, c.n, c.n - c.n_converged, c.all_converged() ? 1 : 0,
                    retained ? 1 : 0, shrunk ? 1 : 0);
      out << buf;
    }
  }
}

}  // namespace simplex_track

#endif  // SIMPLEX_TRACK__REACHABILITY_HPP_
