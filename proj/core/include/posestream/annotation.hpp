#pragma once

#include <optional>
#include <vector>

#include "posestream/body_model.hpp"
#include "posestream/keypoints.hpp"

namespace posestream {

/// Ground-truth record for one person in one frame.
struct Annotation {
  int frame = 0;
  int track_id = 0;
  /// 2D keypoints; `is_annotation` is set so OKS prefers this side's scale.
  KeypointSet keypoints;
  /// Root-relative 3D joints in meters, when available.
  std::optional<std::vector<Point3>> joints3d;
  /// Generating parameters, when available (simulated data).
  std::optional<PoseState> pose;
  /// Whether `pose->beta` is trustworthy supervision.
  bool has_beta = false;

  std::optional<Box> box() const { return keypoint_box(keypoints); }
};

/// Polygon marking an image area without annotations in one frame.
struct IgnoreRegion {
  int frame = 0;
  std::vector<Point2> polygon;
};

}  // namespace posestream
