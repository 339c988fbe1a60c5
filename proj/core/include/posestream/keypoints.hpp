#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "posestream/geometry.hpp"

namespace posestream {

/// 2D keypoints of one person with per-point validity.
struct KeypointSet {
  std::vector<Point2> points;
  std::vector<std::uint8_t> valid;
  /// Pixels-per-meter scale, when known ahead of time.
  std::optional<double> scale;
  /// Ground-truth side of a comparison; its scale takes precedence.
  bool is_annotation = false;

  std::size_t size() const { return points.size(); }
  std::size_t valid_count() const;
  bool is_valid(std::size_t i) const { return valid[i] != 0; }
};

/// Axis-aligned box in pixels.
struct Box {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() > 0.0 && height() > 0.0 ? width() * height() : 0.0; }
};

/// Hull of the valid keypoints, enlarged so its width and height grow by the
/// fraction `padding` (split evenly between both sides).
/// Returns nullopt when no keypoint is valid.
std::optional<Box> keypoint_box(const KeypointSet& kp, double padding = 0.1);

double box_iou(const Box& a, const Box& b);

}  // namespace posestream
