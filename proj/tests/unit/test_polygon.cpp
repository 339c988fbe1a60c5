#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "posestream/errors.hpp"
#include "posestream/polygon.hpp"
#include "posestream/random.hpp"

using namespace posestream;

namespace {

// Even-odd ray casting.
bool inside(const Polygon& poly, const Point2& p) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y()) &&
        p.x() < (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x()) {
      in = !in;
    }
  }
  return in;
}

// Midpoint-rule estimate of area(poly & box) on an n x n grid over the box.
double sampled_area(const Polygon& poly, const Box& box, int n = 600) {
  const double dx = box.width() / n, dy = box.height() / n;
  int hits = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) hits += inside(poly, {box.x0 + (i + 0.5) * dx, box.y0 + (j + 0.5) * dy});
  return hits * dx * dy;
}

// A random star-shaped (hence simple) polygon around c.
Polygon random_star(Rng& rng, const Point2& c, int n) {
  Polygon p;
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * (i + rng.uniform(0.1, 0.9)) / n;
    const double r = rng.uniform(20.0, 120.0);
    p.emplace_back(c.x() + r * std::cos(a), c.y() + r * std::sin(a));
  }
  return p;
}

}  // namespace

TEST(Polygon, ShoelaceKnownShapes) {
  const Polygon square{{0, 0}, {4, 0}, {4, 4}, {0, 4}};
  EXPECT_EQ(polygon_area(square), 16.0);
  EXPECT_EQ(signed_area(square), 16.0);
  const Polygon reversed{{0, 4}, {4, 4}, {4, 0}, {0, 0}};
  EXPECT_EQ(signed_area(reversed), -16.0);
  const Polygon tri{{0, 0}, {6, 0}, {0, 3}};
  EXPECT_EQ(polygon_area(tri), 9.0);
  // the scripted ignore region: 350x380 rectangle plus a 350x30 triangle
  const Polygon region{{150, 60}, {500, 60}, {500, 440}, {330, 470}, {150, 440}};
  EXPECT_DOUBLE_EQ(polygon_area(region), 350.0 * 380.0 + 0.5 * 350.0 * 30.0);
}

TEST(Polygon, SimplicityChecks) {
  EXPECT_TRUE(is_simple(Polygon{{0, 0}, {4, 0}, {4, 4}, {0, 4}}));
  EXPECT_FALSE(is_simple(Polygon{{0, 0}, {4, 4}, {4, 0}, {0, 4}}));  // bow tie
  EXPECT_FALSE(is_simple(Polygon{{0, 0}, {1, 1}}));
  EXPECT_FALSE(is_simple(Polygon{{0, 0}, {1, 1}, {2, 2}}));          // zero area
  EXPECT_FALSE(is_simple(Polygon{{0, 0}, {4, 0}, {4, 0}, {0, 4}}));  // repeated vertex
  EXPECT_FALSE(is_simple(Polygon{{0, 0}, {NAN, 0}, {0, 4}}));
  EXPECT_THROW(require_simple(Polygon{{0, 0}, {4, 4}, {4, 0}, {0, 4}}), DegeneratePolygon);
  // concave but simple
  EXPECT_TRUE(is_simple(Polygon{{0, 0}, {10, 0}, {10, 10}, {5, 3}, {0, 10}}));
}

TEST(Polygon, ClipContainedAndDisjoint) {
  const Polygon p{{10, 10}, {20, 10}, {20, 20}, {10, 20}};
  EXPECT_EQ(intersection_area(p, {0, 0, 100, 100}), 100.0);
  EXPECT_EQ(intersection_area(p, {30, 30, 40, 40}), 0.0);
  EXPECT_EQ(intersection_area(p, {15, 15, 25, 25}), 25.0);
  EXPECT_EQ(intersection_area(p, {12, 12, 12, 18}), 0.0);  // empty box
  EXPECT_EQ(intersection_area(p, {10, 10, 20, 20}), 100.0);
}

TEST(Polygon, ClipConcaveMatchesSampling) {
  const Polygon u{{0, 0}, {30, 0}, {30, 30}, {20, 30}, {20, 10}, {10, 10}, {10, 30}, {0, 30}};
  ASSERT_TRUE(is_simple(u));
  EXPECT_DOUBLE_EQ(polygon_area(u), 900.0 - 200.0);
  // box straddling the notch: a 30x10 band at y in [15, 25] gives two 10x10 legs
  EXPECT_NEAR(intersection_area(u, {0, 15, 30, 25}), 200.0, 1e-9);
}

TEST(Polygon, ClipRandomAgainstSampling) {
  Rng rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const Polygon p = random_star(rng, {200, 200}, 3 + static_cast<int>(rng.below(8)));
    ASSERT_TRUE(is_simple(p));
    const double x = rng.uniform(60, 300), y = rng.uniform(60, 300);
    const Box b{x, y, x + rng.uniform(10, 150), y + rng.uniform(10, 150)};
    const double exact = intersection_area(p, b);
    const double est = sampled_area(p, b);
    EXPECT_NEAR(exact, est, 0.01 * b.area() + 1.0) << "trial " << trial;
    EXPECT_LE(exact, std::min(b.area(), polygon_area(p)) + 1e-9);
  }
}

TEST(Polygon, BoxPolygonArea) {
  const Box b{3, 4, 13, 24};
  EXPECT_EQ(polygon_area(box_polygon(b)), b.area());
}

TEST(Polygon, ContainsBoxConcave) {
  const Polygon u{{0, 0}, {30, 0}, {30, 30}, {20, 30}, {20, 10}, {10, 10}, {10, 30}, {0, 30}};
  EXPECT_TRUE(contains_box(u, {1, 1, 29, 9}));
  EXPECT_TRUE(contains_box(u, {0, 0, 10, 30}));  // touching the boundary
  EXPECT_TRUE(contains_box(u, {21, 12, 29, 29}));
  EXPECT_FALSE(contains_box(u, {5, 15, 25, 20}));  // spans the notch
  EXPECT_FALSE(contains_box(u, {12, 12, 18, 28}));  // inside the notch
  EXPECT_FALSE(contains_box(u, {-1, 1, 5, 5}));
  EXPECT_EQ(intersection_area(u, {1, 1, 29, 9}), 28.0 * 8.0);
}

TEST(Polygon, ContainsBoxAgreesWithCornerSampling) {
  Rng rng(22);
  int contained = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const Polygon p = random_star(rng, {200, 200}, 3 + static_cast<int>(rng.below(8)));
    const double x = rng.uniform(100, 280), y = rng.uniform(100, 280);
    const Box b{x, y, x + rng.uniform(2, 40), y + rng.uniform(2, 40)};
    const bool c = contains_box(p, b);
    // oracle: a 40x40 lattice over the closed box, all inside
    bool all = true;
    for (int i = 0; i <= 40 && all; ++i)
      for (int j = 0; j <= 40 && all; ++j) all = inside(p, {b.x0 + i * b.width() / 40, b.y0 + j * b.height() / 40});
    if (c) {
      EXPECT_TRUE(all) << trial;
      EXPECT_EQ(intersection_area(p, b) / b.area(), 1.0);
      ++contained;
    } else if (all) {
      // the lattice can miss a thin sliver; the exact area must still show it
      EXPECT_LT(intersection_area(p, b), b.area()) << trial;
    }
  }
  EXPECT_GT(contained, 20);
}
