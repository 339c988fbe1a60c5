#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "posestream/detection.hpp"
#include "posestream/errors.hpp"
#include "posestream/metrics.hpp"
#include "posestream/simulator.hpp"
#include "support.hpp"

using namespace posestream;
using posestream::testing::random_pose;

namespace {

const Intrinsics kCam = default_intrinsics(512, 512);

GridOutput empty_grids() {
  const DetectionConfig cfg;
  return GridOutput::empty(512, 512, cfg.strides, cfg.anchors);
}

std::vector<Point3> joints(const PoseState& p) {
  const auto j = forward_kinematics(p);
  return {j.begin(), j.end()};
}

double mean_joint_error_mm(const PoseState& a, const PoseState& b) {
  const auto ja = forward_kinematics(a);
  const auto jb = forward_kinematics(b);
  double s = 0.0;
  for (int i = 0; i < kNumJoints; ++i) s += (ja[i] - jb[i]).norm();
  return 1000.0 * s / kNumJoints;
}

SceneConfig three_agents() {
  SceneConfig s;
  s.frames = 5;
  for (double x : {-1.2, 0.0, 1.2}) {
    AgentConfig a;
    a.motion.start = {x, 0.3, 5.0 + x};
    a.motion.velocity = {0.01, 0.0, 0.0};
    a.yaw = 0.3 * x;
    s.agents.push_back(a);
  }
  return s;
}

}  // namespace

TEST(Grid, ShapesAndCandidateCount) {
  const GridOutput g = empty_grids();
  EXPECT_EQ(g.levels[0].rows, 16);
  EXPECT_EQ(g.levels[1].rows, 8);
  EXPECT_EQ(g.levels[2].cols, 4);
  EXPECT_EQ(g.candidate_count(), 1344u);
}

TEST(Decode, ZeroLogDepthGivesDefault) {
  const Detector det;
  const GridOutput g = empty_grids();
  for (int l = 0; l < kNumLevels; ++l) {
    RawCell c;
    const Point3 t = det.decode_translation(c, g.levels[l], l, 1, 2, kCam);
    EXPECT_NEAR(t.z(), det.config().z_default[l] * kCam.fx, 1e-12);
  }
}

TEST(Decode, CellAtPrincipalPointUnprojectsOnAxis) {
  const Detector det;
  GridOutput g = empty_grids();
  Intrinsics k = kCam;
  const Point2 base = g.levels[0].base_pixel(3, 5);
  k.cx = base.x();
  k.cy = base.y();
  RawCell c;
  c.z_log = 0.4;
  const Point3 t = det.decode_translation(c, g.levels[0], 0, 3, 5, k);
  EXPECT_NEAR(t.x(), 0.0, 1e-12);
  EXPECT_NEAR(t.y(), 0.0, 1e-12);
  EXPECT_NEAR(t.z(), 15e-3 * 512 * std::exp(0.4), 1e-12);
}

TEST(Decode, ReprojectsOffsetsForAnyIntrinsics) {
  const Detector det;
  const GridOutput g = empty_grids();
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const Intrinsics k = augment_intrinsics(kCam, rng);
    const int l = static_cast<int>(rng.below(kNumLevels));
    const auto& lev = g.levels[l];
    const int r = static_cast<int>(rng.below(lev.rows));
    const int c = static_cast<int>(rng.below(lev.cols));
    RawCell cell;
    cell.du = rng.uniform(-100, 100);
    cell.dv = rng.uniform(-100, 100);
    cell.z_log = rng.uniform(-2, 2);
    const Point2 uv = project(det.decode_translation(cell, lev, l, r, c, k), k);
    const Point2 want = lev.base_pixel(r, c) + Point2(cell.du, cell.dv);
    ASSERT_LT((uv - want).norm(), 1e-6);
  }
}

TEST(PoseDecoder, EncodeIsRightInverse) {
  const PoseDecoder dec(DetectionConfig{}.decoder_seed);
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    BodyPoseVector body;
    for (int k = 0; k < kNumBodyPoseParams; ++k) body[k] = rng.uniform(-1.5, 1.5);
    const auto e = dec.encode(body);
    ASSERT_EQ(e.size(), static_cast<std::size_t>(kEmbeddingDim));
    EXPECT_LT((dec.decode(e) - body).cwiseAbs().maxCoeff(), 1e-9);
  }
  EXPECT_THROW(dec.decode(std::vector<double>(3, 0.0)), InvalidArgument);
}

TEST(Detect, BackgroundOnlyIsEmpty) {
  const Detector det;
  EXPECT_TRUE(det.detect(empty_grids(), kCam).empty());
  EXPECT_EQ(det.decode_all(empty_grids(), kCam).size(), 1344u);
}

TEST(Detect, SingleConfidentCandidate) {
  const Detector det;
  GridOutput g = empty_grids();
  Rng rng(10);
  PoseState p = random_pose(rng);
  canonicalize(p);
  ASSERT_TRUE(write_detection(g, p, 3.0, kCam, det.config(), det.decoder()));
  // a second one below threshold elsewhere
  PoseState q = p;
  q.gamma.x() += 1.5;
  ASSERT_TRUE(write_detection(g, q, -2.0, kCam, det.config(), det.decoder()));
  const auto out = det.detect(g, kCam);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_NEAR(out[0].confidence, sigmoid(3.0), 1e-12);
  EXPECT_LT(mean_joint_error_mm(out[0].pose, p), 1e-3);
}

TEST(Detect, SimulatedSceneInvertsExactly) {
  const SceneConfig cfg = three_agents();
  const SceneGenerator gen(cfg);
  const Detector det(cfg.detection);
  for (int t = 0; t < cfg.frames; ++t) {
    const FrameObservation f = gen.frame(t);
    const auto found = det.detect(f.grids, f.intrinsics);
    ASSERT_EQ(found.size(), 3u);
    for (const auto& a : f.annotations) {
      double best_mm = std::numeric_limits<double>::infinity();
      double best_px = 0.0;
      double best_oks = 0.0;
      for (const auto& d : found) {
        const double mm = mean_joint_error_mm(d.pose, *a.pose);
        if (mm < best_mm) {
          best_mm = mm;
          best_oks = oks(a.keypoints, d.keypoints);
          best_px = 0.0;
          for (std::size_t i = 0; i < a.keypoints.size(); ++i) {
            best_px = std::max(best_px, (a.keypoints.points[i] - d.keypoints.points[i]).norm());
          }
        }
      }
      EXPECT_LT(best_mm, 1.0);
      EXPECT_LT(best_px, 1e-3);
      EXPECT_GT(best_oks, 0.99);
    }
  }
}

TEST(Detect, OutputsRespectNms) {
  const SceneConfig cfg = scenario("crowd_8", 3);
  const SceneGenerator gen(cfg);
  const Detector det(cfg.detection);
  for (int t = 0; t < 20; ++t) {
    const auto found = det.detect(gen.frame(t).grids, cfg.camera());
    EXPECT_LE(found.size(), 1344u);
    for (std::size_t i = 0; i < found.size(); ++i) {
      if (i > 0) EXPECT_GE(found[i - 1].confidence, found[i].confidence);
      for (std::size_t j = i + 1; j < found.size(); ++j) {
        EXPECT_LT(oks(found[i].keypoints, found[j].keypoints), 0.5);
      }
    }
  }
}

namespace {

DetectionCandidate candidate_for(const PoseState& p, double logit) {
  DetectionCandidate d;
  d.pose = p;
  d.logit = logit;
  d.confidence = sigmoid(logit);
  d.keypoints = keypoints_2d(p, kCam);
  return d;
}

Annotation annotation_for(const PoseState& p, int id) {
  Annotation a;
  a.track_id = id;
  a.keypoints = keypoints_2d(p, kCam);
  a.keypoints.is_annotation = true;
  a.pose = p;
  a.has_beta = true;
  return a;
}

}  // namespace

TEST(Match, IdenticalPairScoresConfidence) {
  Rng rng(11);
  const PoseState p = random_pose(rng);
  const std::vector<DetectionCandidate> d{candidate_for(p, 50.0)};
  const std::vector<Annotation> a{annotation_for(p, 0)};
  const auto m = match_to_ground_truth(d, a);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_NEAR(m[0].score, 1.0, 1e-12);
}

TEST(Match, HigherConfidenceWins) {
  Rng rng(12);
  const PoseState p = random_pose(rng);
  const std::vector<DetectionCandidate> d{candidate_for(p, 0.5), candidate_for(p, 2.0)};
  const std::vector<Annotation> a{annotation_for(p, 0)};
  const auto m = match_to_ground_truth(d, a);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].detection, 1u);
}

TEST(Match, EqualsBruteForceMaxScore) {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const int nd = 1 + static_cast<int>(rng.below(6));
    const int ng = 1 + static_cast<int>(rng.below(6));
    std::vector<DetectionCandidate> d;
    std::vector<Annotation> a;
    PoseState base = random_pose(rng);
    for (int i = 0; i < ng; ++i) {
      PoseState p = base;
      p.gamma.x() += 0.25 * i;
      a.push_back(annotation_for(p, i));
    }
    for (int i = 0; i < nd; ++i) {
      PoseState p = base;
      p.gamma.x() += rng.uniform(-0.2, 1.4);
      d.push_back(candidate_for(p, rng.uniform(-3, 3)));
    }
    Eigen::MatrixXd s(nd, ng);
    for (int i = 0; i < nd; ++i)
      for (int j = 0; j < ng; ++j) s(i, j) = oks(d[i].keypoints, a[j].keypoints) * d[i].confidence;

    // oracle: best total over all injective maps, counting only pairs >= 0.05
    const int small = std::min(nd, ng);
    const bool by_det = nd <= ng;
    std::vector<int> perm(std::max(nd, ng));
    std::iota(perm.begin(), perm.end(), 0);
    double best = -1.0;
    do {
      double total = 0.0;
      for (int i = 0; i < small; ++i) total += by_det ? s(i, perm[i]) : s(perm[i], i);
      best = std::max(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));

    const auto m = match_to_ground_truth(d, a);
    double got = 0.0;
    for (const auto& x : m) {
      EXPECT_GE(x.score, 0.05);
      EXPECT_NEAR(x.score, s(x.detection, x.annotation), 1e-12);
      got += x.score;
    }
    // dropped weak pairs lower the total by less than 0.05 each
    EXPECT_LE(got, best + 1e-9);
    EXPECT_GT(got, best - 0.05 * small - 1e-9);
  }
}

TEST(Losses, IdenticalPredictionOnlyConfidence) {
  Rng rng(14);
  const PoseState p = random_pose(rng);
  const std::vector<DetectionCandidate> d{candidate_for(p, 1.5)};
  const std::vector<Annotation> a{annotation_for(p, 0)};
  const std::vector<Match> m{{0, 0, 1.0}};
  const auto l = supervision_losses(d, a, m, kCam, 1);
  EXPECT_EQ(l.loss_2d, 0.0);
  EXPECT_EQ(l.loss_3d, 0.0);
  EXPECT_EQ(l.loss_angle, 0.0);
  EXPECT_EQ(l.loss_beta, 0.0);
  EXPECT_NEAR(l.loss_conf, -std::log(1.0 / (1.0 + std::exp(-1.5))), 1e-12);
  EXPECT_EQ(l.positives, 1);
  EXPECT_EQ(l.negatives, 0);
}

TEST(Losses, PelvisShiftOnlyAffects2d) {
  Rng rng(15);
  const PoseState p = random_pose(rng);
  PoseState q = p;
  q.gamma += Point3(0.1, -0.05, 0.2);
  const std::vector<DetectionCandidate> d{candidate_for(q, 1.0)};
  const std::vector<Annotation> a{annotation_for(p, 0)};
  const std::vector<Match> m{{0, 0, 1.0}};
  const auto l = supervision_losses(d, a, m, kCam, 1);
  EXPECT_LT(l.loss_3d, 1e-12);
  EXPECT_GT(l.loss_2d, 0.0);
}

TEST(Losses, HandComputedTwoKeypoints) {
  DetectionCandidate d;
  d.logit = 0.0;
  d.keypoints.points = {{10, 10}, {20, 30}};
  d.keypoints.valid = {1, 1};
  Annotation a;
  a.keypoints.points = {{13, 14}, {20, 20}};
  a.keypoints.valid = {1, 1};
  const std::vector<DetectionCandidate> ds{d};
  const std::vector<Annotation> as{a};
  const std::vector<Match> m{{0, 0, 1.0}};
  Intrinsics k = kCam;
  k.width = 100;
  const auto l = supervision_losses(ds, as, m, k, 1);
  // |3| + |4| and |0| + |10|, each over width 100, averaged
  EXPECT_NEAR(l.loss_2d, (7.0 / 100 + 10.0 / 100) / 2.0, 1e-15);
  EXPECT_NEAR(l.loss_conf, std::log(2.0), 1e-15);
}

TEST(Losses, AngleDifferenceIsWrapped) {
  PoseState p;
  p.gamma = {0, 0, 5};
  PoseState q = p;
  p.theta[5] = 3.1;
  q.theta[5] = -3.1;
  const std::vector<DetectionCandidate> d{candidate_for(q, 0.0)};
  const std::vector<Annotation> a{annotation_for(p, 0)};
  const std::vector<Match> m{{0, 0, 1.0}};
  const auto l = supervision_losses(d, a, m, kCam, 1);
  const double w = 2.0 * std::numbers::pi - 6.2;
  EXPECT_NEAR(l.loss_angle, w * w / kNumPoseParams, 1e-12);
}

TEST(Losses, NegativesAreSeededAndCapped) {
  const Detector det;
  const auto all = det.decode_all(empty_grids(), kCam);
  std::vector<Annotation> a;
  std::vector<Match> m{{0, 0, 1.0}};
  a.push_back(annotation_for(all[0].pose, 0));
  const auto l1 = supervision_losses(all, a, m, kCam, 7, 256);
  const auto l2 = supervision_losses(all, a, m, kCam, 7, 256);
  EXPECT_EQ(l1.negatives, 256);
  EXPECT_EQ(l1.loss_conf, l2.loss_conf);
  EXPECT_GT(l1.loss_conf, 0.0);
}

TEST(Losses, EmptyBatchFlagged) {
  const auto l = supervision_losses({}, {}, {}, kCam, 1);
  EXPECT_TRUE(l.empty);
  EXPECT_EQ(l.loss_conf, 0.0);
}
