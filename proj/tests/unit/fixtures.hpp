#pragma once

// Hand-traced CLEAR-MOT and identity fixtures shared by the unit tests and
// the acceptance runner.

#include <vector>

#include "posestream/annotation.hpp"
#include "posestream/body_model.hpp"
#include "posestream/tracker.hpp"

namespace posestream::fixtures {

/// Keypoints of a neutral person standing at lateral offset x, 5 m away.
inline KeypointSet person_at(double x) {
  PoseState p;
  p.gamma = {x, 0.3, 5.0};
  return keypoints_2d(p, default_intrinsics(512, 512));
}

inline Annotation gt(int frame, int id, double x) {
  Annotation a;
  a.frame = frame;
  a.track_id = id;
  a.keypoints = person_at(x);
  a.keypoints.is_annotation = true;
  PoseState p;
  p.gamma = {x, 0.3, 5.0};
  a.pose = p;
  return a;
}

inline TrackRecord pred(int frame, int id, double x) {
  TrackRecord r;
  r.frame = frame;
  r.id = id;
  r.pose.gamma = {x, 0.3, 5.0};
  r.keypoints = person_at(x);
  r.ema_score = 1.0;
  return r;
}

struct Case {
  std::vector<Annotation> gt;
  std::vector<TrackRecord> preds;
};

/// Two people over three frames; the second is missed in frame 1.
inline Case five_of_six() {
  Case c;
  for (int f = 0; f < 3; ++f) {
    c.gt.push_back(gt(f, 0, -1.0));
    c.gt.push_back(gt(f, 1, 1.0));
    c.preds.push_back(pred(f, 10, -1.0));
    if (f != 1) c.preds.push_back(pred(f, 11, 1.0));
  }
  return c;
}

/// One person tracked by id 7 for two frames, then by id 8 for two frames.
inline Case handover() {
  Case c;
  for (int f = 0; f < 4; ++f) {
    c.gt.push_back(gt(f, 0, 0.0));
    c.preds.push_back(pred(f, f < 2 ? 7 : 8, 0.0));
  }
  return c;
}

/// Same shape as the handover; identity recall can only credit one half.
inline Case split_identity() { return handover(); }

}  // namespace posestream::fixtures
