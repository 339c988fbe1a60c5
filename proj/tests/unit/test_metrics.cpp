#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "posestream/errors.hpp"
#include "posestream/metrics.hpp"
#include "posestream/polygon.hpp"
#include "support.hpp"

using namespace posestream;
using posestream::testing::random_pose;

namespace {

std::vector<Point3> random_cloud(Rng& rng, int n = kNumJoints) {
  std::vector<Point3> c(n);
  for (auto& p : c) p = Point3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  return c;
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  return q.normalized().toRotationMatrix();
}

TrackRecord record_with_box(int frame, int id, const Box& b) {
  // Two keypoints spanning the box; padding is undone so the derived box is b.
  TrackRecord r;
  r.frame = frame;
  r.id = id;
  const double w = b.width() / 1.1, h = b.height() / 1.1;
  const Point2 c((b.x0 + b.x1) / 2, (b.y0 + b.y1) / 2);
  r.keypoints.points = {c - Point2(w / 2, h / 2), c + Point2(w / 2, h / 2)};
  r.keypoints.valid = {1, 1};
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// CLEAR-MOT and identity metrics

TEST(ClearMot, PerfectPredictions) {
  auto c = fixtures::five_of_six();
  c.preds.push_back(fixtures::pred(1, 11, 1.0));
  const ClearMot m = clear_mot(c.gt, c.preds);
  EXPECT_EQ(m.mota, 100.0);
  EXPECT_EQ(m.fp + m.fn + m.id_switches, 0);
  const IdMetrics id = id_metrics(c.gt, c.preds);
  EXPECT_EQ(id.idf1, 100.0);
  EXPECT_EQ(id.idp, 100.0);
  EXPECT_EQ(id.idr, 100.0);
}

TEST(ClearMot, FiveOfSixMatched) {
  const auto c = fixtures::five_of_six();
  const ClearMot m = clear_mot(c.gt, c.preds);
  EXPECT_EQ(m.gt_count, 6);
  EXPECT_EQ(m.fn, 1);
  EXPECT_EQ(m.fp, 0);
  EXPECT_EQ(m.id_switches, 0);
  EXPECT_NEAR(m.mota, 100.0 * (1.0 - 1.0 / 6.0), 1e-9);
  EXPECT_NEAR(m.mota, 83.33, 0.01);
}

TEST(ClearMot, HandoverIsOneSwitch) {
  const auto c = fixtures::handover();
  const ClearMot m = clear_mot(c.gt, c.preds);
  EXPECT_EQ(m.id_switches, 1);
  EXPECT_EQ(m.fn, 0);
  EXPECT_EQ(m.fp, 0);
  EXPECT_NEAR(m.mota, 75.0, 1e-12);
  int flagged = 0;
  for (const auto& row : m.table) flagged += row.id_switch;
  EXPECT_EQ(flagged, 1);
  EXPECT_TRUE(m.table[2].id_switch);
}

TEST(ClearMot, SwitchAfterGapStillCounts) {
  fixtures::Case c;
  c.gt = {fixtures::gt(0, 0, 0.0), fixtures::gt(1, 0, 0.0), fixtures::gt(2, 0, 0.0)};
  c.preds = {fixtures::pred(0, 1, 0.0), fixtures::pred(2, 2, 0.0)};
  const ClearMot m = clear_mot(c.gt, c.preds);
  EXPECT_EQ(m.fn, 1);
  EXPECT_EQ(m.id_switches, 1);
}

TEST(ClearMot, CarryOverBeatsBetterNewcomer) {
  // id 5 sits slightly off but above threshold; id 6 is exact from frame 1
  std::vector<Annotation> gt{fixtures::gt(0, 0, 0.0), fixtures::gt(1, 0, 0.0)};
  std::vector<TrackRecord> preds{fixtures::pred(0, 5, 0.02), fixtures::pred(1, 5, 0.02),
                                 fixtures::pred(1, 6, 0.0)};
  ASSERT_GE(oks(gt[1].keypoints, preds[1].keypoints), 0.5);
  const ClearMot m = clear_mot(gt, preds);
  EXPECT_EQ(m.id_switches, 0);
  EXPECT_EQ(m.fp, 1);
}

TEST(ClearMot, MotaRecomputesFromCounts) {
  Rng rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Annotation> gt;
    std::vector<TrackRecord> preds;
    for (int f = 0; f < 10; ++f) {
      for (int id = 0; id < 3; ++id) {
        if (rng.bernoulli(0.9)) gt.push_back(fixtures::gt(f, id, id - 1.0));
        if (rng.bernoulli(0.8)) {
          preds.push_back(fixtures::pred(f, id + 10 * static_cast<int>(rng.below(2)),
                                         id - 1.0 + rng.uniform(-0.05, 0.05)));
        }
      }
    }
    const ClearMot m = clear_mot(gt, preds);
    EXPECT_EQ(m.mota, mota_from_counts(m.fp, m.fn, m.id_switches, m.gt_count));
    EXPECT_LE(m.mota, 100.0);
    EXPECT_EQ(m.matches + m.fn, m.gt_count);
    EXPECT_EQ(m.matches + m.fp, static_cast<int>(preds.size()));
  }
}

TEST(ClearMot, EmptyGroundTruthDenominator) {
  std::vector<TrackRecord> preds{fixtures::pred(0, 1, 0.0), fixtures::pred(0, 2, 1.0)};
  const ClearMot m = clear_mot({}, preds);
  EXPECT_EQ(m.fp, 2);
  EXPECT_EQ(m.mota, -100.0);
}

TEST(IdMetrics, SplitIdentityHalfRecall) {
  const auto c = fixtures::split_identity();
  const IdMetrics m = id_metrics(c.gt, c.preds);
  EXPECT_EQ(m.idtp, 2);
  EXPECT_EQ(m.idfn, 2);
  EXPECT_EQ(m.idfp, 2);
  EXPECT_NEAR(m.idr, 50.0, 1e-12);
  EXPECT_NEAR(m.idp, 50.0, 1e-12);
  EXPECT_NEAR(m.idf1, 50.0, 1e-12);
}

TEST(IdMetrics, NoPredictionsReportZero) {
  const auto c = fixtures::handover();
  const IdMetrics m = id_metrics(c.gt, {});
  EXPECT_EQ(m.idp, 0.0);
  EXPECT_EQ(m.idr, 0.0);
  EXPECT_EQ(m.idf1, 0.0);
  EXPECT_EQ(m.idfn, 4);
}

TEST(IdMetrics, BoxIouMode) {
  const auto c = fixtures::handover();
  MatchConfig cfg;
  cfg.similarity = MatchSimilarity::kBoxIou;
  EXPECT_EQ(clear_mot(c.gt, c.preds, cfg).id_switches, 1);
  EXPECT_NEAR(id_metrics(c.gt, c.preds, cfg).idr, 50.0, 1e-12);
}

// ---------------------------------------------------------------------------
// Ignore regions

TEST(Ignore, SmallBoxInsideLargeRegion) {
  // region 20x the box area, box fully inside
  const Box b{100, 100, 110, 110};
  const IgnoreRegion r{0, {{80, 80}, {120, 80}, {120, 130}, {80, 130}}};
  ASSERT_NEAR(polygon_area(r.polygon), 2000.0, 1e-9);
  const std::vector<TrackRecord> preds{record_with_box(0, 1, b)};
  const std::vector<IgnoreRegion> regions{r};

  IgnoreConfig buggy;
  buggy.mode = IgnoreMode::kBuggyIou;
  const auto rb = filter_ignore(preds, regions, buggy);
  ASSERT_EQ(rb.log.size(), 1u);
  EXPECT_NEAR(rb.log[0].iou, 0.05, 1e-9);
  EXPECT_NEAR(rb.log[0].overlap_fraction, 1.0, 1e-9);
  EXPECT_FALSE(rb.log[0].discarded);
  EXPECT_EQ(rb.retained.size(), 1u);

  const auto rf = filter_ignore(preds, regions, IgnoreConfig{});
  ASSERT_EQ(rf.log.size(), 1u);
  EXPECT_TRUE(rf.log[0].discarded);
  EXPECT_TRUE(rf.retained.empty());
}

TEST(Ignore, OutsideRetainedInBothModes) {
  const std::vector<TrackRecord> preds{record_with_box(0, 1, {400, 400, 420, 430})};
  const std::vector<IgnoreRegion> regions{{0, {{0, 0}, {100, 0}, {100, 100}, {0, 100}}}};
  for (auto mode : {IgnoreMode::kBuggyIou, IgnoreMode::kFixedFraction}) {
    const auto r = filter_ignore(preds, regions, {mode});
    EXPECT_EQ(r.retained.size(), 1u);
    EXPECT_TRUE(r.log.empty());
  }
}

TEST(Ignore, BoxEqualToRegionDiscardedInBothModes) {
  const Box b{50, 60, 150, 200};
  const std::vector<TrackRecord> preds{record_with_box(0, 1, b)};
  const std::vector<IgnoreRegion> regions{{0, box_polygon(b)}};
  for (auto mode : {IgnoreMode::kBuggyIou, IgnoreMode::kFixedFraction}) {
    const auto r = filter_ignore(preds, regions, {mode});
    EXPECT_TRUE(r.retained.empty());
    ASSERT_EQ(r.log.size(), 1u);
    EXPECT_NEAR(r.log[0].iou, 1.0, 1e-9);
  }
}

TEST(Ignore, OtherFramesUnaffected) {
  const Box b{50, 60, 150, 200};
  const std::vector<TrackRecord> preds{record_with_box(1, 1, b)};
  const std::vector<IgnoreRegion> regions{{0, box_polygon(b)}};
  EXPECT_EQ(filter_ignore(preds, regions).retained.size(), 1u);
}

TEST(Ignore, FixedDiscardsOnlyAboveFraction) {
  Rng rng(2);
  const std::vector<IgnoreRegion> regions{{0, {{150, 60}, {500, 60}, {500, 440}, {330, 470}, {150, 440}}}};
  std::vector<TrackRecord> preds;
  for (int i = 0; i < 300; ++i) {
    const double x = rng.uniform(0, 480), y = rng.uniform(0, 480);
    preds.push_back(record_with_box(0, i, {x, y, x + rng.uniform(5, 80), y + rng.uniform(5, 80)}));
  }
  const auto r = filter_ignore(preds, regions);
  std::size_t discarded = 0;
  for (const auto& e : r.log) {
    EXPECT_EQ(e.discarded, e.overlap_fraction > 0.3);
    discarded += e.discarded;
  }
  EXPECT_EQ(r.retained.size() + discarded, preds.size());
}

TEST(Ignore, DegenerateRegionThrows) {
  const std::vector<TrackRecord> preds{record_with_box(0, 1, {0, 0, 10, 10})};
  const std::vector<IgnoreRegion> bowtie{{0, {{0, 0}, {10, 10}, {10, 0}, {0, 10}}}};
  EXPECT_THROW(filter_ignore(preds, bowtie), DegeneratePolygon);
  const std::vector<IgnoreRegion> line{{0, {{0, 0}, {5, 5}, {10, 10}}}};
  EXPECT_THROW(filter_ignore(preds, line), DegeneratePolygon);
}

// ---------------------------------------------------------------------------
// Pose metrics

TEST(Pck, IdenticalAndDisplaced) {
  const auto a = fixtures::person_at(0.0);
  for (double th : {0.05, 0.1, 0.2}) EXPECT_EQ(pck(a, a, th, 100.0), 1.0);
  auto b = a;
  for (auto& p : b.points) p += Point2(2.0 * 0.1 * 100.0, 0.0);
  EXPECT_EQ(pck(a, b, 0.1, 100.0), 0.0);
}

TEST(Pck, HalfWithin) {
  const auto a = fixtures::person_at(0.0);
  auto b = a;
  for (std::size_t i = 0; i < b.size(); ++i) b.points[i].y() += i % 2 ? 5.0 : 15.0;
  EXPECT_EQ(pck(a, b, 0.1, 100.0), 0.5);
  auto none = a;
  for (auto& v : none.valid) v = 0;
  EXPECT_THROW(pck(a, none, 0.1, 100.0), NoValidKeypoints);
}

TEST(Mpjpe, TranslationInvariantAndConstructedOffset) {
  Rng rng(3);
  const auto gt = random_cloud(rng);
  auto moved = gt;
  const Point3 t(0.3, -2.0, 5.0);
  for (auto& p : moved) p += t;
  EXPECT_NEAR(mpjpe(gt, moved), 0.0, 1e-9);
  EXPECT_EQ(mpjpe(gt, gt), 0.0);

  auto off = gt;
  for (std::size_t i = 1; i < off.size(); ++i) {
    Point3 dir(rng.normal(), rng.normal(), rng.normal());
    off[i] += 0.010 * dir.normalized();
  }
  // 23 of 24 joints moved by 10 mm, the root by 0
  EXPECT_NEAR(mpjpe(gt, off), 10.0 * 23.0 / 24.0, 1e-9);
}

TEST(PaMpjpe, ZeroUnderSimilarity) {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const auto gt = random_cloud(rng);
    const Eigen::Matrix3d R = random_rotation(rng);
    const double s = rng.uniform(0.1, 10.0);
    const Point3 t(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
    std::vector<Point3> pred;
    for (const auto& p : gt) pred.push_back(s * R * p + t);
    ASSERT_LT(pa_mpjpe(gt, pred), 1e-6);
    ASSERT_LT(pa_mpjpe(pred, gt), 1e-6);
  }
  const auto gt = random_cloud(rng);
  std::vector<Point3> doubled;
  for (const auto& p : gt) doubled.push_back(2.0 * p);
  EXPECT_LT(pa_mpjpe(gt, doubled), 1e-6);
}

TEST(PaMpjpe, AgreesWithUmeyama) {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto a = random_cloud(rng);
    const auto b = random_cloud(rng);
    Eigen::Matrix3Xd src(3, a.size()), dst(3, b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      src.col(k) = b[k];
      dst.col(k) = a[k];
    }
    const Eigen::Matrix4d T = Eigen::umeyama(src, dst, true);
    double sum = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const Point3 q = T.topLeftCorner<3, 3>() * b[k] + T.topRightCorner<3, 1>();
      sum += (q - a[k]).norm();
    }
    EXPECT_NEAR(pa_mpjpe(a, b), 1000.0 * sum / a.size(), 1e-6);
  }
}

TEST(PaMpjpe, NotAboveMpjpeUnderSmallNoise) {
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    const auto gt = random_cloud(rng);
    auto pred = gt;
    for (auto& p : pred) p += Point3(rng.normal(0, 0.1), rng.normal(0, 0.1), rng.normal(0, 0.1));
    EXPECT_LE(pa_mpjpe(gt, pred), mpjpe(gt, pred) + 1e-9);
  }
}

namespace {

double rms(std::span<const Point3> a, std::span<const Point3> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]).squaredNorm();
  return std::sqrt(sum / a.size());
}

}  // namespace

// The alignment is optimal in squared error, so root alignment (a feasible
// similarity) can never beat it in RMS.
TEST(PaMpjpe, AlignmentBeatsRootAlignmentInRms) {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const auto g = forward_kinematics(random_pose(rng));
    const auto q = forward_kinematics(random_pose(rng));
    const std::vector<Point3> gt(g.begin(), g.end());
    const std::vector<Point3> pred(q.begin(), q.end());
    const Similarity3 t = procrustes(pred, gt);
    std::vector<Point3> aligned, rooted;
    for (const auto& p : pred) {
      aligned.push_back(t.apply(p));
      rooted.push_back(p - pred[0] + gt[0]);
    }
    ASSERT_LE(rms(gt, aligned), rms(gt, rooted) + 1e-12) << i;
  }
}

// Mean distance is not what the alignment minimizes: unrelated body poses
// occasionally score worse after alignment than after root centering.
TEST(PaMpjpe, MeanDistanceCanExceedMpjpe) {
  Rng rng(909);
  int above = 0;
  for (int i = 0; i < 5000; ++i) {
    const auto g = forward_kinematics(random_pose(rng));
    const auto q = forward_kinematics(random_pose(rng));
    const std::vector<Point3> gt(g.begin(), g.end());
    const std::vector<Point3> pred(q.begin(), q.end());
    above += pa_mpjpe(gt, pred) > mpjpe(gt, pred) ? 1 : 0;
  }
  EXPECT_GT(above, 0);
  EXPECT_LT(above, 5000 / 50);
}

TEST(PaMpjpe, RejectsReflections) {
  Rng rng(7);
  const auto gt = random_cloud(rng);
  std::vector<Point3> mirror;
  for (const auto& p : gt) mirror.emplace_back(-p.x(), p.y(), p.z());
  const Similarity3 t = procrustes(mirror, gt);
  EXPECT_NEAR(t.rotation.determinant(), 1.0, 1e-9);
  EXPECT_GT(pa_mpjpe(gt, mirror), 1.0);
}

TEST(PaMpjpe, DegenerateClouds) {
  const std::vector<Point3> two{{0, 0, 0}, {1, 0, 0}};
  EXPECT_THROW(procrustes(two, two), DegenerateCloud);
  const std::vector<Point3> line{{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {3, 3, 3}};
  EXPECT_THROW(procrustes(line, line), DegenerateCloud);
}

// ---------------------------------------------------------------------------
// Sequence evaluation

TEST(Evaluate, PoseSectionOnlyWhenRequested) {
  const auto c = fixtures::five_of_six();
  EvaluationConfig cfg;
  EXPECT_FALSE(evaluate(c.gt, {}, c.preds, cfg).report.pose.has_value());
  cfg.pose_metrics = true;
  const Evaluation e = evaluate(c.gt, {}, c.preds, cfg);
  ASSERT_TRUE(e.report.pose.has_value());
  EXPECT_EQ(e.report.pose->pairs, 5);
  EXPECT_EQ(e.report.pose->pck.at(0.05), 1.0);
  EXPECT_NEAR(e.report.pose->mpjpe, 0.0, 1e-9);
  const std::string text = format_report(e.report);
  EXPECT_NE(text.find("PCK@0.05"), std::string::npos);
  EXPECT_NE(text.find("PA-MPJPE"), std::string::npos);
}
