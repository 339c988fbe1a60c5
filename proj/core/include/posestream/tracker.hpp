#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "posestream/detection.hpp"
#include "posestream/frame.hpp"
#include "posestream/update.hpp"

namespace posestream {

enum class UpdaterKind { kKinematic, kLearned };

struct TrackerConfig {
  double alpha = 0.2;               // EMA weight of the newest OKS
  double instantiate_below = 0.2;   // detections less similar than this to every track start one
  double delete_ema_below = 0.15;
  int young_age = 4;
  double young_oks_below = 0.15;
  double collapse_oks_above = 0.6;
  int collapse_frames = 20;         // deletion once a pair exceeds this many frames
  double initial_score = 1.0;
  UpdaterKind updater = UpdaterKind::kKinematic;
  /// Expected image width and height in pixels.
  int input_size = 512;

  DetectionConfig detection;
  KinematicConfig kinematic;
  UpdateConfig update;

  void validate() const;
};

struct Track {
  int id = 0;
  PoseState pose;
  Eigen::VectorXd hidden;
  double ema_score = 1.0;
  int age = 1;  // 1 on the birth frame
  /// Consecutive frames above the collapse threshold, keyed by peer id.
  std::map<int, int> overlap_frames;
  double last_matched_oks = 0.0;
  Point3 previous_gamma = Point3::Zero();
};

enum class EventKind { kInstantiate, kDelete };

enum class DeleteReason { kNone, kLowScore, kYoung, kCollapse };

const char* reason_text(DeleteReason r);

struct LifecycleEvent {
  int frame = 0;
  int track_id = 0;
  EventKind kind = EventKind::kInstantiate;
  DeleteReason reason = DeleteReason::kNone;
  double ema_score = 0.0;
  int age = 0;
  /// Collapse partner that survived.
  std::optional<int> peer;
  /// Best OKS to a track when the detection was instantiated.
  std::optional<double> oks;
};

struct TrackRecord {
  int frame = 0;
  int id = 0;
  PoseState pose;
  KeypointSet keypoints;
  double ema_score = 0.0;
  int age = 0;
};

struct Snapshot {
  int frame = 0;
  std::vector<TrackRecord> tracks;
};

struct TrackHistory {
  std::vector<Snapshot> frames;
  std::vector<LifecycleEvent> events;

  std::size_t count(EventKind kind) const;
  std::size_t count(DeleteReason reason) const;
};

struct Deletion {
  std::size_t index = 0;
  DeleteReason reason = DeleteReason::kNone;
  std::optional<int> peer;
};

/// EMA update and deletion rules for one frame.
///
/// `best_oks[i]` is track i's best OKS against this frame's detections and
/// `pairwise_oks` the OKS between tracks. Tracks flagged `newborn` keep their
/// score and counters and cannot be deleted. Ages must already include this
/// frame. Scores and overlap counters are updated in place; the returned
/// deletions are in track order and are not applied.
std::vector<Deletion> lifecycle_step(std::span<Track> tracks, std::span<const double> best_oks,
                                     const Eigen::MatrixXd& pairwise_oks,
                                     std::span<const std::uint8_t> newborn,
                                     const TrackerConfig& cfg);

/// Online tracker for one stream. Each step detects, updates existing
/// tracks, instantiates tracks for unexplained detections and applies the
/// deletion rules.
class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg = {}, const Skeleton& skel = Skeleton::standard());

  /// Throws OutOfOrderFrame unless frame ids strictly increase.
  Snapshot step(const FrameObservation& frame);

  const std::vector<Track>& tracks() const { return tracks_; }
  const std::vector<LifecycleEvent>& events() const { return events_; }
  const TrackerConfig& config() const { return cfg_; }

 private:
  void update_existing(const FrameObservation& frame, std::span<const DetectionCandidate> dets);
  void refine_newborns(const FrameObservation& frame, std::size_t first);

  TrackerConfig cfg_;
  Skeleton skel_;
  Detector detector_;
  std::optional<PoseUpdater> updater_;
  std::vector<Track> tracks_;
  std::vector<LifecycleEvent> events_;
  std::optional<int> last_frame_;
  int next_id_ = 0;
};

TrackHistory run_stream(std::span<const FrameObservation> frames, const TrackerConfig& cfg = {});

/// Pulls frames from `next` until it returns false, so long sequences need
/// not be held in memory.
TrackHistory run_stream(const std::function<bool(FrameObservation&)>& next,
                        const TrackerConfig& cfg = {});

}  // namespace posestream
