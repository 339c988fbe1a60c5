#pragma once

#include <vector>

#include "posestream/annotation.hpp"
#include "posestream/detection.hpp"
#include "posestream/features.hpp"
#include "posestream/geometry.hpp"

namespace posestream {

/// Everything known about one frame of a sequence.
struct FrameObservation {
  int frame = 0;
  Intrinsics intrinsics;
  ImageFeatureMap features;
  GridOutput grids;
  std::vector<Annotation> annotations;
  std::vector<IgnoreRegion> ignore_regions;
};

}  // namespace posestream
