#pragma once

#include <span>
#include <vector>

#include "posestream/geometry.hpp"
#include "posestream/keypoints.hpp"

namespace posestream {

using Polygon = std::vector<Point2>;

/// Shoelace area; positive for counter-clockwise vertex order in a y-up frame.
double signed_area(std::span<const Point2> poly);
double polygon_area(std::span<const Point2> poly);

/// At least three vertices, nonzero area and no two non-adjacent edges touching.
bool is_simple(std::span<const Point2> poly);

/// Throws DegeneratePolygon unless `is_simple`.
void require_simple(std::span<const Point2> poly);

Polygon box_polygon(const Box& box);

/// Part of `poly` inside `box` (Sutherland-Hodgman; exact because the clip
/// window is convex).
Polygon clip_to_box(std::span<const Point2> poly, const Box& box);

/// Whether the closed box lies inside the simple polygon (boundary contact allowed).
bool contains_box(std::span<const Point2> poly, const Box& box);

/// Exactly box.area() when the polygon contains the box.
double intersection_area(std::span<const Point2> poly, const Box& box);

}  // namespace posestream
