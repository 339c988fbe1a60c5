#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "posestream/annotation.hpp"
#include "posestream/body_model.hpp"
#include "posestream/detection.hpp"
#include "posestream/frame.hpp"
#include "posestream/geometry.hpp"
#include "posestream/polygon.hpp"

namespace posestream {

enum class MotionKind {
  kLinear,    // start + t * velocity
  kCircular,  // circle in the x-z plane around center
  kWaypoint,  // piecewise linear through (frame, position) pairs, held at the ends
  kConverge,  // target + (start - target) * exp(-t / time_constant)
};

struct Waypoint {
  int frame = 0;
  Point3 position = Point3::Zero();
};

/// Pelvis trajectory in camera coordinates (meters).
struct MotionModel {
  MotionKind kind = MotionKind::kLinear;
  Point3 start = Point3::Zero();
  Point3 velocity = Point3::Zero();  // per frame
  Point3 center = Point3::Zero();
  double radius = 0.0;
  double angular_speed = 0.0;  // radians per frame
  double phase = 0.0;
  std::vector<Waypoint> waypoints;
  Point3 target = Point3::Zero();
  double time_constant = 1.0;  // frames

  Point3 position(int frame) const;
};

struct AgentConfig {
  MotionModel motion;
  double yaw = 0.0;  // rotation about the vertical axis; 0 faces the camera
  ShapeVector beta = ShapeVector::Zero();
  /// Amplitude (radians) of the slowly varying joint angles.
  double pose_amplitude = 0.15;
  /// Unannotated agents are still detected but produce no ground truth.
  bool annotated = true;
  int first_frame = 0;
  int last_frame = -1;  // inclusive; -1 for the whole sequence

  bool active(int frame) const { return frame >= first_frame && (last_frame < 0 || frame <= last_frame); }
};

/// Screen-space box hiding whatever is behind it during [first_frame, last_frame].
struct Occluder {
  Box box;
  int first_frame = 0;
  int last_frame = -1;

  bool active(int frame) const { return frame >= first_frame && (last_frame < 0 || frame <= last_frame); }
};

struct IgnoreScript {
  Polygon polygon;
  int first_frame = 0;
  int last_frame = -1;

  bool active(int frame) const { return frame >= first_frame && (last_frame < 0 || frame <= last_frame); }
};

struct NoiseConfig {
  double keypoint_sigma = 0.0;       // pixels
  double miss_probability = 0.0;
  double false_positive_rate = 0.0;  // expected false detections per frame
  double confidence_noise = 0.0;     // logit standard deviation
};

struct SceneConfig {
  std::string name = "custom";
  int width = 512;
  int height = 512;
  /// Defaults to fx = fy = width with the principal point at the center.
  std::optional<Intrinsics> intrinsics;
  int frames = 100;
  std::uint64_t seed = 0;
  std::vector<AgentConfig> agents;
  std::vector<Occluder> occluders;
  std::vector<IgnoreScript> ignore_regions;
  NoiseConfig noise;
  /// Agents with a smaller fraction of unoccluded in-image keypoints are missed.
  double min_visible_fraction = 0.3;
  double detection_logit = 4.0;
  int feature_channels = 8;
  int feature_stride = 8;
  double blob_sigma = 8.0;  // pixels
  DetectionConfig detection;

  Intrinsics camera() const { return intrinsics ? *intrinsics : default_intrinsics(width, height); }
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Per-agent summary of the ground truth.
struct GtTrack {
  int id = 0;
  bool annotated = true;
  int first_frame = -1;  // first annotated frame, -1 if never
  int last_frame = -1;
  int annotated_frames = 0;
  int detected_frames = 0;
};

/// Lazily produces frames; frame(t) depends only on the config and t.
class SceneGenerator {
 public:
  explicit SceneGenerator(SceneConfig cfg, const Skeleton& skel = Skeleton::standard());

  const SceneConfig& config() const { return cfg_; }
  int frame_count() const { return cfg_.frames; }

  /// Agent pose at a frame (ignores activity windows).
  PoseState agent_pose(int agent, int frame) const;

  FrameObservation frame(int t) const;
  /// Also reports, per agent, whether it was written into the grids.
  FrameObservation frame(int t, std::vector<std::uint8_t>& detected) const;

  /// Whether agent `agent` was written into the grids of frame t.
  bool detected(int agent, int t) const;

 private:
  struct Placement {
    FrameObservation obs;
    std::vector<std::uint8_t> detected;
  };
  Placement build(int t) const;

  SceneConfig cfg_;
  Skeleton skel_;
  Intrinsics k_;
  std::shared_ptr<const PoseDecoder> decoder_;
};

struct Sequence {
  std::vector<FrameObservation> frames;
  std::vector<GtTrack> tracks;
};

Sequence generate(const SceneConfig& cfg);

/// Writes `pose` into the nearest free anchor of the level whose default
/// depth is closest. Returns false when every candidate anchor is taken.
bool write_detection(GridOutput& grids, const PoseState& pose, double logit, const Intrinsics& k,
                     const DetectionConfig& cfg, const PoseDecoder& decoder);

std::vector<std::string> scenario_names();
/// Throws UnknownScenario.
SceneConfig scenario(const std::string& name, std::uint64_t seed = 0);

}  // namespace posestream
