#include "posestream/keypoints.hpp"

#include <algorithm>
#include <limits>

namespace posestream {

std::size_t KeypointSet::valid_count() const {
  return static_cast<std::size_t>(std::count_if(valid.begin(), valid.end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

std::optional<Box> keypoint_box(const KeypointSet& kp, double padding) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  Box b{kInf, kInf, -kInf, -kInf};
  bool any = false;
  for (std::size_t i = 0; i < kp.size(); ++i) {
    if (!kp.is_valid(i)) continue;
    any = true;
    b.x0 = std::min(b.x0, kp.points[i].x());
    b.y0 = std::min(b.y0, kp.points[i].y());
    b.x1 = std::max(b.x1, kp.points[i].x());
    b.y1 = std::max(b.y1, kp.points[i].y());
  }
  if (!any) return std::nullopt;
  const double pw = 0.5 * padding * b.width();
  const double ph = 0.5 * padding * b.height();
  b.x0 -= pw;
  b.x1 += pw;
  b.y0 -= ph;
  b.y1 += ph;
  return b;
}

double box_iou(const Box& a, const Box& b) {
  const Box inter{std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1),
                  std::min(a.y1, b.y1)};
  const double i = inter.area();
  const double u = a.area() + b.area() - i;
  return u > 0.0 ? i / u : 0.0;
}

}  // namespace posestream
