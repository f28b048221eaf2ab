#include "simplex_track/reachability.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>

#include "gtest/gtest.h"

namespace simplex_track {
namespace {

const RobotLimits kLimits{};
const std::string kReferenceSet = std::string(SIMPLEX_TRACK_DATA_DIR) + "/reference_safe_set.txt";

SweepConfig TinyGrid() {
  SweepConfig c;
  c.d0_min = -0.2;
  c.d0_max = 0.2;
  c.d0_step = 0.1;
  c.theta0_min = -0.2;
  c.theta0_max = 0.2;
  c.theta0_step = 0.1;
  c.rp_min = 0.0;
  c.rp_max = 0.0;
  c.n_paths = 2;
  return c;
}

// Synthetic records: every simulation converges, worst deviation base + |d0|.
std::vector<SweepRecord> SyntheticRecords(const SweepConfig &c, double base, double t_conv) {
  std::vector<SweepRecord> out;
  const GridAxis da = c.d_axis(), ta = c.theta_axis(), ra = c.rp_axis();
  for (std::size_t i = 0; i < da.count; ++i)
    for (std::size_t j = 0; j < ta.count; ++j)
      for (std::size_t k = 0; k < ra.count; ++k)
        for (std::size_t p = 0; p < c.n_paths; ++p)
          out.push_back({i, j, k, da.value(i), ta.value(j), ra.value(k), p, true, base + std::abs(da.value(i)), t_conv});
  return out;
}

SweepRecord &At(std::vector<SweepRecord> &recs, std::size_t i, std::size_t j, std::size_t path = 0) {
  for (auto &r : recs) {
    if (r.i_d == i && r.i_theta == j && r.path_id == path) return r;
  }
  throw std::logic_error("no such record");
}

// Brute-force lattice convexity: every lattice point on a segment between members is a member,
// and no lattice point strictly inside a member triangle is missing.
bool SegmentsConvex(const std::set<std::pair<long, long>> &cells) {
  for (const auto &a : cells) {
    for (const auto &b : cells) {
      const long dx = b.first - a.first, dy = b.second - a.second;
      const long g = std::gcd(std::abs(dx), std::abs(dy));
      if (g == 0) continue;
      for (long t = 1; t < g; ++t) {
        if (!cells.count({a.first + dx / g * t, a.second + dy / g * t})) return false;
      }
    }
  }
  return true;
}

TEST(SweepConfig, DefaultCardinality) {
  const SweepConfig c;
  EXPECT_EQ(c.d_axis().count, 21u);
  EXPECT_EQ(c.theta_axis().count, 63u);
  EXPECT_EQ(c.rp_axis().count, 9u);
  EXPECT_EQ(c.initial_state_count(), 11907u);
  EXPECT_EQ(c.record_count(), 1190700u);
  EXPECT_EQ(c.steps(), 300u);
  EXPECT_EQ(c.hold_steps(), 30u);
  EXPECT_NO_THROW(c.validate());
}

TEST(SweepConfig, ValidationNamesTheField) {
  SweepConfig c;
  c.conv_hold = 20.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.step_size = 0.07;
  try {
    c.validate();
    FAIL();
  } catch (const std::invalid_argument &e) {
    EXPECT_NE(std::string(e.what()).find("sweep.step_size"), std::string::npos);
  }
  c = {};
  c.n_paths = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.rp_max = 0.8;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(GridAxis, IndexOfRoundsToNearestCell) {
  const GridAxis a = GridAxis::from_range(-1.5708, 1.5708, 0.05);
  EXPECT_EQ(a.count, 63u);
  EXPECT_EQ(a.index_of(0.0792), 33u);
  EXPECT_EQ(a.index_of(-1.5708), 0u);
  EXPECT_FALSE(a.index_of(1.7).has_value());
  EXPECT_FALSE(a.index_of(std::nan("")).has_value());
  EXPECT_THROW(GridAxis::from_range(1.0, 0.0, 0.1), std::invalid_argument);
}

TEST(SimulateConvergence, OnPathAlignedConvergesImmediately) {
  const PurePursuit pp({}, kLimits);
  const SweepConfig c;
  const Path straight = Path({{0.0, 0.0}, {30.0, 0.0}}).densified(0.5);
  for (double rp : {0.0, 0.2, 0.4}) {
    const auto o = simulate_convergence(straight, pp, c, 0.0, 0.0, rp);
    EXPECT_TRUE(o.converged);
    ASSERT_TRUE(o.t_conv.has_value());
    EXPECT_DOUBLE_EQ(*o.t_conv, 0.0);
    EXPECT_LT(o.max_d, 1e-9);
  }
}

TEST(SimulateConvergence, ConvergenceTimeIsStartOfHoldWindow) {
  const PurePursuit pp({}, kLimits);
  const SweepConfig c;
  const Path straight = Path({{0.0, 0.0}, {30.0, 0.0}}).densified(0.5);
  const auto o = simulate_convergence(straight, pp, c, 0.5, 0.0, 0.0);
  ASSERT_TRUE(o.converged);
  EXPECT_NEAR(o.max_d, 0.5, 1e-12);
  // independent replay: first sample with |d| <= 0.1 that starts a 30-sample run
  Pose pose = pose_on_path(straight, 0.0, 0.5, 0.0);
  PathFrame f = project(straight, {pose.x, pose.y}, pose.theta);
  std::vector<double> d;
  for (int k = 0; k <= 300; ++k) {
    d.push_back(std::abs(f.d_signed));
    pose = step(pose, pp.compute({pose, f, straight, k * 0.05}), 0.05);
    f = project_near(straight, {pose.x, pose.y}, pose.theta, f.arclength);
  }
  std::optional<int> start;
  for (int k = 0; k + 30 <= 300 && !start; ++k) {
    if (std::all_of(d.begin() + k, d.begin() + k + 31, [](double x) { return x <= 0.1; })) start = k;
  }
  ASSERT_TRUE(start.has_value());
  EXPECT_DOUBLE_EQ(*o.t_conv, *start * 0.05);
}

// A path that turns harder than the robot can follow from the paper's boundary state.
TEST(SimulateConvergence, AdversePathDefeatsPurePursuitFromBoundaryState) {
  const PurePursuit pp({}, kLimits);
  const SweepConfig c;
  std::vector<Vec2> zigzag{{0.0, 0.0}, {1.0, 0.0}};
  for (int k = 0; k < 20; ++k) {
    zigzag.push_back({2.0 + k, (k % 2 == 0) ? -1.0 : 1.0});
  }
  const Path path = Path(zigzag).densified(0.5);
  const auto o = simulate_convergence(path, pp, c, 0.5, 0.0792, 0.0);
  EXPECT_FALSE(o.converged);
  EXPECT_FALSE(o.t_conv.has_value());
}

TEST(SimulateConvergence, RunawayStopsAsNonConverged) {
  const PurePursuit pp({}, kLimits);
  SweepConfig c;
  c.runaway_distance = 0.3;
  const Path straight = Path({{0.0, 0.0}, {30.0, 0.0}}).densified(0.5);
  const auto o = simulate_convergence(straight, pp, c, 0.2, 1.5, 0.0);
  EXPECT_FALSE(o.converged);
  EXPECT_GT(o.max_d, 0.3);
}

TEST(RunSweep, QuickGridIsWorkerCountIndependent) {
  const PurePursuit pp({}, kLimits);
  const SweepConfig c = SweepConfig::quick();
  const auto a = run_sweep(c, pp, 1);
  const auto b = run_sweep(c, pp, 4);
  ASSERT_EQ(a.size(), c.record_count());
  EXPECT_EQ(a, b);
  for (std::size_t i = 1; i < a.size(); ++i) {
    const auto ka = std::make_tuple(a[i - 1].i_d, a[i - 1].i_theta, a[i - 1].i_rp, a[i - 1].path_id);
    const auto kb = std::make_tuple(a[i].i_d, a[i].i_theta, a[i].i_rp, a[i].path_id);
    ASSERT_LT(ka, kb);
  }
  for (const auto &r : a) {
    EXPECT_EQ(r.converged, r.t_conv.has_value());
    if (r.t_conv) {
      EXPECT_LE(*r.t_conv, c.horizon);
    }
    EXPECT_GE(r.max_d, 0.0);
  }
}

TEST(RecordsCsv, RoundTripIsExact) {
  const PurePursuit pp({}, kLimits);
  SweepConfig c = SweepConfig::quick();
  c.n_paths = 2;
  const auto recs = run_sweep(c, pp, 2);
  std::stringstream ss;
  write_records_csv(recs, ss);
  EXPECT_EQ(read_records_csv(ss, c), recs);
}

TEST(RecordsCsv, RejectsMalformedRows) {
  const SweepConfig c = SweepConfig::quick();
  const std::string header = "d0,theta0,rp,path_id,converged,max_d,t_conv\n";
  std::stringstream no_header("0,0,0,0,1,0,0\n");
  EXPECT_THROW(read_records_csv(no_header, c), SweepError);
  std::stringstream off_grid(header + "5,0,0,0,1,0,0\n");
  EXPECT_THROW(read_records_csv(off_grid, c), SweepError);
  std::stringstream bad_tconv(header + "0,0,0,0,0,0.1,3\n");
  EXPECT_THROW(read_records_csv(bad_tconv, c), SweepError);
  std::stringstream bad_number(header + "0,zero,0,0,1,0,0\n");
  EXPECT_THROW(read_records_csv(bad_number, c), SweepError);
  std::stringstream short_row(header + "0,0,0,0,1\n");
  EXPECT_THROW(read_records_csv(short_row, c), SweepError);
}

TEST(BuildSafeSet, AllConvergedKeepsEveryCell) {
  const SweepConfig c = TinyGrid();
  SafeSetSummary s;
  const SafeSet set = build_safe_set(SyntheticRecords(c, 0.2, 2.0), c, 1.0, kLimits, &s);
  EXPECT_EQ(s.grid_cells, 25u);
  EXPECT_EQ(s.roa_cells, 25u);
  EXPECT_EQ(s.retained_cells, 25u);
  EXPECT_EQ(s.shrunk_cells, 9u);  // interior cells
  EXPECT_NEAR(set.set_max_d(), 0.4, 1e-12);
  EXPECT_EQ(set.shrunk_max_d(), set.set_max_d() - 0.05);
}

TEST(BuildSafeSet, SingleNonConvergedRecordExcludesItsCell) {
  const SweepConfig c = TinyGrid();
  auto recs = SyntheticRecords(c, 0.2, 2.0);
  auto &r = At(recs, 0, 0, 1);
  r.converged = false;
  r.t_conv.reset();
  SafeSetSummary s;
  const SafeSet set = build_safe_set(recs, c, 1.0, kLimits, &s);
  EXPECT_EQ(s.roa_cells, 24u);
  EXPECT_FALSE(set.retained_at(0, 0));
  EXPECT_FALSE(set.contains_unshrunk(-0.2, -0.2));
  EXPECT_TRUE(set.contains_unshrunk(-0.1, -0.2));
}

TEST(BuildSafeSet, CellsOverTheBoundAreDropped) {
  const SweepConfig c = TinyGrid();
  auto recs = SyntheticRecords(c, 0.2, 2.0);
  At(recs, 4, 4).max_d = 1.2;
  At(recs, 4, 3).max_d = 1.0;  // the bound itself is not safe
  const SafeSet set = build_safe_set(recs, c, 1.0, kLimits);
  EXPECT_FALSE(set.retained_at(4, 4));
  EXPECT_FALSE(set.retained_at(4, 3));
  EXPECT_LT(set.set_max_d(), 1.0);
}

TEST(BuildSafeSet, DwellIsWorstConvergenceOverShrunkCells) {
  const SweepConfig c = TinyGrid();
  auto recs = SyntheticRecords(c, 0.2, 2.0);
  At(recs, 0, 2).t_conv = 9.0;  // boundary cell: retained, not shrunk
  At(recs, 2, 2).t_conv = 5.5;
  At(recs, 1, 1).max_d = 0.6;   // raises set_max_d; its own cell leaves the shrunk set via the margin
  At(recs, 1, 1).t_conv = 7.0;
  const SafeSet set = build_safe_set(recs, c, 1.0, kLimits);
  EXPECT_DOUBLE_EQ(set.set_max_d(), 0.6);
  EXPECT_FALSE(set.shrunk_at(1, 1));
  EXPECT_FALSE(set.shrunk_at(0, 2));
  EXPECT_DOUBLE_EQ(set.dwell_time(), 5.5);
}

TEST(BuildSafeSet, FailsWhenNothingIsSafe) {
  const SweepConfig c = TinyGrid();
  EXPECT_THROW(build_safe_set(SyntheticRecords(c, 1.5, 2.0), c, 1.0, kLimits), SafeSetError);
  auto recs = SyntheticRecords(c, 0.2, 2.0);
  recs.pop_back();
  EXPECT_THROW(build_safe_set(recs, c, 1.0, kLimits), SafeSetError);
}

TEST(Convexify, RemovesNotchesUntilConvex) {
  // an L-shape is not lattice-convex
  const GridAxis a = GridAxis::from_range(0.0, 0.9, 0.1);
  std::vector<SafeCell> cells;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      if (i < 2 || j < 2) cells.push_back({i, j, 0.1 * static_cast<double>(i + j) / 10.0, 1.0});
  const auto kept = convexify(cells, a, a);
  std::set<std::pair<long, long>> pts;
  for (const auto &c : kept) pts.insert({static_cast<long>(c.i_d), static_cast<long>(c.i_theta)});
  EXPECT_TRUE(SegmentsConvex(pts));
  EXPECT_LT(kept.size(), cells.size());
  EXPECT_GE(kept.size(), 12u);
}

TEST(Convexify, RandomBlobsEndConvexAndAreSubsets) {
  const GridAxis a = GridAxis::from_range(0.0, 1.4, 0.1);
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<SafeCell> cells;
    std::set<std::pair<long, long>> in;
    for (std::size_t i = 0; i < 15; ++i)
      for (std::size_t j = 0; j < 15; ++j) {
        const double r = std::hypot(double(i) - 7.0, double(j) - 7.0);
        if (r < 6.0 && unit_uniform(rng) > 0.08 * r) {
          cells.push_back({i, j, unit_uniform(rng), 1.0});
          in.insert({long(i), long(j)});
        }
      }
    const auto kept = convexify(cells, a, a);
    std::set<std::pair<long, long>> pts;
    for (const auto &c : kept) {
      pts.insert({long(c.i_d), long(c.i_theta)});
      EXPECT_TRUE(in.count({long(c.i_d), long(c.i_theta)}));
    }
    EXPECT_TRUE(SegmentsConvex(pts));
  }
}

TEST(SafeSetFile, RoundTripIsLossless) {
  const SweepConfig c = TinyGrid();
  const SafeSet set = build_safe_set(SyntheticRecords(c, 0.2, 2.0), c, 1.0, kLimits);
  std::stringstream ss;
  set.save(ss);
  const SafeSet back = SafeSet::load(ss);
  EXPECT_EQ(set, back);
}

std::string ReferenceText() {
  std::ifstream in(kReferenceSet);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(SafeSetFile, RejectsTruncatedFile) {
  const std::string text = ReferenceText();
  ASSERT_FALSE(text.empty());
  std::stringstream ss(text.substr(0, text.size() / 2));
  EXPECT_THROW(SafeSet::load(ss), SafeSetError);
  std::stringstream no_end(text.substr(0, text.rfind("end")));
  EXPECT_THROW(SafeSet::load(no_end), SafeSetError);
}

TEST(SafeSetFile, RejectsNonConvexEdit) {
  // drop one interior cell: the hull then encloses a hole
  const std::string text = ReferenceText();
  const std::string victim = "\n10,31,";
  const auto pos = text.find(victim);
  ASSERT_NE(pos, std::string::npos);
  std::string edited = text.substr(0, pos) + text.substr(text.find('\n', pos + 1));
  const auto cells_pos = edited.find("cells ");
  const auto eol = edited.find('\n', cells_pos);
  const long n = std::stol(edited.substr(cells_pos + 6, eol - cells_pos - 6));
  edited.replace(cells_pos, eol - cells_pos, "cells " + std::to_string(n - 1));
  std::stringstream ss(edited);
  try {
    SafeSet::load(ss);
    FAIL() << "non-convex set accepted";
  } catch (const SafeSetError &e) {
    EXPECT_NE(std::string(e.what()).find("convex"), std::string::npos);
  }
}

TEST(SafeSetFile, RejectsVersionAndScalarTampering) {
  std::string text = ReferenceText();
  std::string wrong_version = text;
  wrong_version.replace(0, wrong_version.find('\n'), "simplex_track_safe_set 2");
  std::stringstream v(wrong_version);
  EXPECT_THROW(SafeSet::load(v), SafeSetError);
  const auto p = text.find("dwell_time ");
  text.replace(p, text.find('\n', p) - p, "dwell_time 3.5");
  std::stringstream t(text);
  EXPECT_THROW(SafeSet::load(t), SafeSetError);
  EXPECT_THROW(SafeSet::load(std::string("/nonexistent/set.txt")), SafeSetError);
}

class ReferenceSet : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { set_ = new SafeSet(SafeSet::load(kReferenceSet)); }
  static void TearDownTestSuite() {
    delete set_;
    set_ = nullptr;
  }
  static SafeSet *set_;
};
SafeSet *ReferenceSet::set_ = nullptr;

TEST_F(ReferenceSet, MembershipExamples) {
  EXPECT_TRUE(set_->contains(0.0, 0.0));
  EXPECT_FALSE(set_->contains(1.5, 0.0));
  EXPECT_FALSE(set_->contains(0.0, 2.0));
}

TEST_F(ReferenceSet, StructuralInvariants) {
  const SafeSet &s = *set_;
  EXPECT_LT(s.set_max_d(), s.safety_bound());
  EXPECT_EQ(s.shrunk_max_d(), s.set_max_d() - 0.05);
  double max_d = 0.0, dwell = 0.0;
  std::set<std::pair<long, long>> pts;
  for (const auto &c : s.cells()) {
    max_d = std::max(max_d, c.worst_max_d);
    pts.insert({long(c.i_d), long(c.i_theta)});
    if (s.shrunk_at(c.i_d, c.i_theta)) {
      dwell = std::max(dwell, c.worst_t_conv);
      EXPECT_LE(c.worst_max_d, s.shrunk_max_d());
    }
  }
  EXPECT_EQ(max_d, s.set_max_d());
  EXPECT_EQ(dwell, s.dwell_time());
  EXPECT_TRUE(SegmentsConvex(pts));
  // shrunk within retained, retained within the grid box
  for (std::size_t i = 0; i < s.d_axis().count; ++i)
    for (std::size_t j = 0; j < s.theta_axis().count; ++j)
      if (s.shrunk_at(i, j)) {
        EXPECT_TRUE(s.retained_at(i, j));
      }
}

TEST_F(ReferenceSet, MatchesShippedContour) {
  std::ifstream in(std::string(SIMPLEX_TRACK_DATA_DIR) + "/reference_contour.csv");
  ASSERT_TRUE(in);
  std::string line;
  std::getline(in, line);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double d, th, wmax, wt;
    std::size_t n, nn;
    int roa, retained, shrunk;
    ASSERT_TRUE(ls >> d >> th >> wmax >> wt >> n >> nn >> roa >> retained >> shrunk);
    EXPECT_EQ(n, 900u);
    EXPECT_EQ(roa == 1, nn == 0);
    EXPECT_EQ(retained == 1, set_->contains_unshrunk(d, th));
    EXPECT_EQ(shrunk == 1, set_->contains(d, th));
    if (retained == 1) {
      EXPECT_EQ(roa, 1);
    }
    ++rows;
  }
  EXPECT_EQ(rows, 1323u);
}

// Re-simulating single (rp, path) cases of retained cells converges.
TEST_F(ReferenceSet, SpotCheckRetainedCellsReconverge) {
  const SweepConfig c;
  const PurePursuit pp({}, kLimits);
  std::mt19937_64 rng(77);
  const auto &cells = set_->cells();
  for (int k = 0; k < 100; ++k) {
    const SafeCell &cell = cells[rng() % cells.size()];
    const std::size_t path_id = rng() % c.n_paths;
    const double rp = c.rp_axis().value(rng() % c.rp_axis().count);
    const Path path = sweep_path(c, path_id);
    const auto o = simulate_convergence(path, pp, c, c.d_axis().value(cell.i_d), c.theta_axis().value(cell.i_theta), rp);
    EXPECT_TRUE(o.converged) << "cell " << cell.i_d << "," << cell.i_theta;
    EXPECT_LE(o.max_d, cell.worst_max_d);
    ASSERT_TRUE(o.t_conv.has_value());
    EXPECT_LE(*o.t_conv, cell.worst_t_conv);
  }
}

}  // namespace
}  // namespace simplex_track
