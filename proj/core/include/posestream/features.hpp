#pragma once

#include <cstddef>
#include <vector>

namespace posestream {

/// Dense image features at 1/8 of the input resolution, stored row-major as
/// (row, col, channel).
struct ImageFeatureMap {
  int rows = 0;
  int cols = 0;
  int channels = 0;
  std::vector<float> data;

  static ImageFeatureMap zeros(int rows, int cols, int channels) {
    return {rows, cols, channels,
            std::vector<float>(static_cast<std::size_t>(rows) * cols * channels, 0.0f)};
  }

  bool empty() const { return data.empty(); }

  float& at(int r, int c, int ch) {
    return data[(static_cast<std::size_t>(r) * cols + c) * channels + ch];
  }
  float at(int r, int c, int ch) const {
    return data[(static_cast<std::size_t>(r) * cols + c) * channels + ch];
  }
};

}  // namespace posestream
