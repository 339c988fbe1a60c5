#pragma once

#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "posestream/body_model.hpp"
#include "posestream/random.hpp"

namespace posestream::testing {

/// Random pose in front of the camera with joint angles up to `amplitude`.
inline PoseState random_pose(Rng& rng, double amplitude = 0.3) {
  PoseState p;
  p.gamma = {rng.uniform(-1.0, 1.0), rng.uniform(-0.3, 0.5), rng.uniform(3.0, 8.0)};
  for (int i = 0; i < kNumPoseParams; ++i) p.theta[i] = rng.uniform(-amplitude, amplitude);
  p.theta[1] = rng.uniform(-1.0, 1.0);
  for (int i = 0; i < kNumShapeParams; ++i) p.beta[i] = rng.uniform(-1.0, 1.0);
  return p;
}

/// Fresh per-test directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto dir = std::filesystem::temp_directory_path() / "posestream_tests" /
             (std::string(info->test_suite_name()) + "." + info->name() + "." + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace posestream::testing
