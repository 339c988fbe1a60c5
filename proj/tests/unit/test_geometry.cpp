#include <cmath>

#include <gtest/gtest.h>

#include "posestream/errors.hpp"
#include "posestream/geometry.hpp"

using namespace posestream;

TEST(Geometry, ProjectUnprojectRoundTrip) {
  Rng rng(11);
  for (int i = 0; i < 10000; ++i) {
    Intrinsics k = default_intrinsics(512, 384);
    k = augment_intrinsics(k, rng);
    const double u = rng.uniform(-200.0, 700.0);
    const double v = rng.uniform(-200.0, 600.0);
    const double z = rng.uniform(0.1, 50.0);
    const Point3 p = unproject(u, v, z, k);
    const Point2 q = project(p, k);
    ASSERT_NEAR(q.x(), u, 1e-9);
    ASSERT_NEAR(q.y(), v, 1e-9);
    ASSERT_NEAR(p.z(), z, 1e-12);
  }
}

TEST(Geometry, ProjectMatchesMatrixForm) {
  const Intrinsics k{600.0, 580.0, 250.0, 190.0, 500, 400};
  const Point3 p(0.4, -0.7, 3.2);
  const Eigen::Vector3d h = k.matrix() * p;
  const Point2 q = project(p, k);
  EXPECT_NEAR(q.x(), h.x() / h.z(), 1e-12);
  EXPECT_NEAR(q.y(), h.y() / h.z(), 1e-12);
}

TEST(Geometry, NonPositiveDepthThrows) {
  const Intrinsics k = default_intrinsics(512, 512);
  EXPECT_THROW(project(Point3(0.0, 0.0, 0.0), k), NonPositiveDepth);
  EXPECT_THROW(project(Point3(1.0, 0.0, -2.0), k), NonPositiveDepth);
  EXPECT_THROW(unproject(10.0, 10.0, 0.0, k), NonPositiveDepth);
}

TEST(Geometry, DefaultIntrinsicsUseWidthAsFocal) {
  const Intrinsics k = default_intrinsics(640, 480);
  EXPECT_EQ(k.fx, 640.0);
  EXPECT_EQ(k.fy, 640.0);
  EXPECT_EQ(k.cx, 320.0);
  EXPECT_EQ(k.cy, 240.0);
  const Point2 c = project(Point3(0.0, 0.0, 4.0), k);
  EXPECT_EQ(c, Point2(320.0, 240.0));
  EXPECT_THROW(default_intrinsics(0, 10), InvalidArgument);
}

TEST(Geometry, AugmentationStaysInRange) {
  const Intrinsics k = default_intrinsics(512, 512);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Intrinsics a = augment_intrinsics(k, rng);
    const double s = a.fx / k.fx;
    EXPECT_GE(s, 0.5 - 1e-12);
    EXPECT_LE(s, 2.0 + 1e-12);
    EXPECT_DOUBLE_EQ(a.fy / k.fy, s);
    EXPECT_LE(std::abs(a.cx - k.cx), 0.05 * 512 + 1e-9);
    EXPECT_LE(std::abs(a.cy - k.cy), 0.05 * 512 + 1e-9);
  }
}

TEST(Geometry, RngIsReproducible) {
  Rng a = Rng::derive(5, 1, 2);
  Rng b = Rng::derive(5, 1, 2);
  Rng c = Rng::derive(5, 2, 1);
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    EXPECT_NE(x, c.next_u64());
  }
}
