#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "posestream/annotation.hpp"
#include "posestream/keypoints.hpp"
#include "posestream/similarity.hpp"
#include "posestream/tracker.hpp"

namespace posestream {

// ---------------------------------------------------------------------------
// Ignore regions

enum class IgnoreMode {
  kBuggyIou,       // discard when IOU(box, region) > iou_threshold
  kFixedFraction,  // discard when area(box & region) / area(box) > fraction_threshold
};

const char* ignore_mode_name(IgnoreMode m);

struct IgnoreConfig {
  IgnoreMode mode = IgnoreMode::kFixedFraction;
  double iou_threshold = 0.1;
  double fraction_threshold = 0.3;
};

/// One prediction whose box touches an ignore region of its frame.
struct DiscardEntry {
  int frame = 0;
  int track_id = 0;
  Box box;
  int region = -1;  // index of the deciding region among the frame's regions
  double iou = 0.0;
  double overlap_fraction = 0.0;
  bool discarded = false;
};

struct FilterResult {
  std::vector<TrackRecord> retained;
  std::vector<DiscardEntry> log;
};

/// Drops predictions covered by an ignore region of the same frame. Throws
/// DegeneratePolygon for a region that is not a simple polygon.
FilterResult filter_ignore(std::span<const TrackRecord> predictions,
                           std::span<const IgnoreRegion> regions, const IgnoreConfig& cfg = {});

// ---------------------------------------------------------------------------
// Tracking metrics

enum class MatchSimilarity { kOks, kBoxIou };

struct MatchConfig {
  MatchSimilarity similarity = MatchSimilarity::kOks;
  double threshold = 0.5;
  SimilarityConfig oks;
};

/// One row per ground-truth object and frame, plus one per unmatched prediction.
struct FrameMatch {
  int frame = 0;
  int gt_id = -1;    // -1 for a false positive
  int pred_id = -1;  // -1 for a miss
  double similarity = 0.0;
  bool id_switch = false;
};

struct ClearMot {
  double mota = 100.0;
  int gt_count = 0;
  int matches = 0;
  int fp = 0;
  int fn = 0;
  int id_switches = 0;
  std::vector<FrameMatch> table;
};

/// MOTA = 100 (1 - (FP + FN + IDSW) / GT), with the denominator floored at 1.
double mota_from_counts(int fp, int fn, int id_switches, int gt_count);

/// CLEAR-MOT: previous correspondences are kept while their similarity stays
/// above the threshold, the rest are matched by Hungarian assignment.
ClearMot clear_mot(std::span<const Annotation> gt, std::span<const TrackRecord> preds,
                   const MatchConfig& cfg = {});

struct IdMetrics {
  double idf1 = 0.0;
  double idp = 0.0;
  double idr = 0.0;
  int idtp = 0;
  int idfp = 0;
  int idfn = 0;
};

/// Identity metrics from the best one-to-one assignment of whole ground-truth
/// trajectories to predicted trajectories. Undefined ratios are reported as 0.
IdMetrics id_metrics(std::span<const Annotation> gt, std::span<const TrackRecord> preds,
                     const MatchConfig& cfg = {});

// ---------------------------------------------------------------------------
// Pose metrics

/// Fraction of jointly valid keypoints closer than threshold * normalization
/// pixels. Throws NoValidKeypoints when no keypoint is valid on both sides.
double pck(const KeypointSet& gt, const KeypointSet& pred, double threshold, double normalization);

/// Mean joint distance in millimeters after subtracting joint 0 from each cloud.
double mpjpe(std::span<const Point3> gt, std::span<const Point3> pred);

struct Similarity3 {
  double scale = 1.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Point3 apply(const Point3& p) const { return scale * rotation * p + translation; }
};

/// Least-squares similarity taking `from` onto `to`, with reflections
/// excluded. Throws DegenerateCloud for fewer than three points or
/// collinear clouds.
Similarity3 procrustes(std::span<const Point3> from, std::span<const Point3> to);

/// Mean joint distance in millimeters after aligning `pred` onto `gt`.
double pa_mpjpe(std::span<const Point3> gt, std::span<const Point3> pred);

// ---------------------------------------------------------------------------
// Sequence evaluation

struct PoseMetrics {
  std::map<double, double> pck;  // threshold -> fraction
  double mpjpe = 0.0;             // mm
  double pa_mpjpe = 0.0;          // mm
  int pairs = 0;                  // matched person-frames used
  int pairs_3d = 0;
};

struct MetricsReport {
  double mota = 100.0;
  double idf1 = 0.0;
  double idp = 0.0;
  double idr = 0.0;
  int id_switches = 0;
  int fp = 0;
  int fn = 0;
  int gt_count = 0;
  int matches = 0;
  int predictions = 0;
  int discarded = 0;
  IgnoreMode ignore_mode = IgnoreMode::kFixedFraction;
  std::optional<PoseMetrics> pose;
};

struct EvaluationConfig {
  MatchConfig match;
  IgnoreConfig ignore;
  bool pose_metrics = false;
  std::vector<double> pck_thresholds{0.05, 0.1, 0.2};
  /// PCK distances are threshold * scale * reference pixels, with the scale
  /// (pixels per meter) estimated from the ground-truth keypoints.
  double pck_reference = 1.0;
};

struct Evaluation {
  MetricsReport report;
  ClearMot clear;
  std::vector<DiscardEntry> discards;
};

Evaluation evaluate(std::span<const Annotation> gt, std::span<const IgnoreRegion> regions,
                    std::span<const TrackRecord> preds, const EvaluationConfig& cfg = {},
                    const Skeleton& skel = Skeleton::standard());

/// Human-readable report.
std::string format_report(const MetricsReport& r);

}  // namespace posestream
