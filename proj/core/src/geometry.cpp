#include "posestream/geometry.hpp"

#include <cmath>
#include <string>

#include "posestream/errors.hpp"

namespace posestream {

namespace {

constexpr double kMinFocalScale = 0.5;
constexpr double kMaxFocalScale = 2.0;
constexpr double kPrincipalJitter = 0.05;

}  // namespace

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw InvalidArgument("intrinsics: focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw InvalidArgument("intrinsics: image size must be positive");
  }
  if (!std::isfinite(cx) || !std::isfinite(cy)) {
    throw InvalidArgument("intrinsics: principal point must be finite");
  }
}

Eigen::Matrix3d Intrinsics::matrix() const {
  Eigen::Matrix3d m;
  m << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return m;
}

Point2 project(const Point3& p, const Intrinsics& k) {
  if (!(p.z() > 0.0)) {
    throw NonPositiveDepth("project: depth must be positive, got " + std::to_string(p.z()));
  }
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

Point3 unproject(double u, double v, double z, const Intrinsics& k) {
  if (!(z > 0.0)) {
    throw NonPositiveDepth("unproject: depth must be positive, got " + std::to_string(z));
  }
  // K^-1 applied in closed form; K is upper triangular with no skew.
  return {z * (u - k.cx) / k.fx, z * (v - k.cy) / k.fy, z};
}

Intrinsics default_intrinsics(int width, int height) {
  if (width <= 0 || height <= 0) {
    throw InvalidArgument("default_intrinsics: image size must be positive");
  }
  Intrinsics k;
  k.fx = static_cast<double>(width);
  k.fy = static_cast<double>(width);
  k.cx = width / 2.0;
  k.cy = height / 2.0;
  k.width = width;
  k.height = height;
  return k;
}

Intrinsics augment_intrinsics(const Intrinsics& k, double focal_scale, double jitter_u,
                              double jitter_v) {
  k.validate();
  Intrinsics out = k;
  out.fx = k.fx * focal_scale;
  out.fy = k.fy * focal_scale;
  out.cx = k.cx + jitter_u * k.width;
  out.cy = k.cy + jitter_v * k.height;
  return out;
}

Intrinsics augment_intrinsics(const Intrinsics& k, Rng& rng) {
  const double log_scale = rng.uniform(std::log(kMinFocalScale), std::log(kMaxFocalScale));
  const double ju = rng.uniform(-kPrincipalJitter, kPrincipalJitter);
  const double jv = rng.uniform(-kPrincipalJitter, kPrincipalJitter);
  return augment_intrinsics(k, std::exp(log_scale), ju, jv);
}

}  // namespace posestream
