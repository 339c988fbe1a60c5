#pragma once

#include <Eigen/Core>

#include "posestream/random.hpp"

namespace posestream {

/// Camera-frame point in meters: +x right, +y down, +z into the scene.
using Point3 = Eigen::Vector3d;
/// Image point in pixels (u right, v down).
using Point2 = Eigen::Vector2d;

struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Throws InvalidArgument unless fx, fy, width and height are positive.
  void validate() const;

  Eigen::Matrix3d matrix() const;

  friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

/// Pinhole projection. Throws NonPositiveDepth when p.z() <= 0.
Point2 project(const Point3& p, const Intrinsics& k);

/// z * K^-1 * (u, v, 1). Throws NonPositiveDepth when z <= 0.
Point3 unproject(double u, double v, double z, const Intrinsics& k);

/// Fallback camera when no calibration is known: fx = fy = width and the
/// principal point at the image center.
Intrinsics default_intrinsics(int width, int height);

/// Training-style intrinsics augmentation: focal lengths scaled by a shared
/// log-uniform factor in [0.5, 2.0]; principal point jittered by up to 5% of
/// the image size.
Intrinsics augment_intrinsics(const Intrinsics& k, Rng& rng);

/// Same as above with the focal scale supplied explicitly (the random part is
/// only the principal-point jitter).
Intrinsics augment_intrinsics(const Intrinsics& k, double focal_scale, double jitter_u,
                              double jitter_v);

}  // namespace posestream
