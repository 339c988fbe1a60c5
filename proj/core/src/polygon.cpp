#include "posestream/polygon.hpp"

#include <algorithm>
#include <cmath>

#include "posestream/errors.hpp"

namespace posestream {

namespace {

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

bool on_segment(const Point2& p, const Point2& a, const Point2& b) {
  return std::min(a.x(), b.x()) <= p.x() && p.x() <= std::max(a.x(), b.x()) &&
         std::min(a.y(), b.y()) <= p.y() && p.y() <= std::max(a.y(), b.y());
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

bool segments_touch(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
  const int d1 = sign(cross(c, d, a));
  const int d2 = sign(cross(c, d, b));
  const int d3 = sign(cross(a, b, c));
  const int d4 = sign(cross(a, b, d));
  if (d1 * d2 < 0 && d3 * d4 < 0) return true;
  if (d1 == 0 && on_segment(a, c, d)) return true;
  if (d2 == 0 && on_segment(b, c, d)) return true;
  if (d3 == 0 && on_segment(c, a, b)) return true;
  if (d4 == 0 && on_segment(d, a, b)) return true;
  return false;
}

// Keeps the part of `in` on the inner side of one box edge.
template <typename Inside, typename Cut>
Polygon clip_edge(const Polygon& in, Inside inside, Cut cut) {
  Polygon out;
  if (in.empty()) return out;
  Point2 prev = in.back();
  bool prev_in = inside(prev);
  for (const auto& cur : in) {
    const bool cur_in = inside(cur);
    if (cur_in) {
      if (!prev_in) out.push_back(cut(prev, cur));
      out.push_back(cur);
    } else if (prev_in) {
      out.push_back(cut(prev, cur));
    }
    prev = cur;
    prev_in = cur_in;
  }
  return out;
}

Point2 cut_x(const Point2& a, const Point2& b, double x) {
  const double t = (x - a.x()) / (b.x() - a.x());
  return {x, a.y() + t * (b.y() - a.y())};
}

Point2 cut_y(const Point2& a, const Point2& b, double y) {
  const double t = (y - a.y()) / (b.y() - a.y());
  return {a.x() + t * (b.x() - a.x()), y};
}

}  // namespace

double signed_area(std::span<const Point2> poly) {
  double s = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point2& a = poly[i];
    const Point2& b = poly[(i + 1) % poly.size()];
    s += a.x() * b.y() - b.x() * a.y();
  }
  return 0.5 * s;
}

double polygon_area(std::span<const Point2> poly) { return std::abs(signed_area(poly)); }

bool is_simple(std::span<const Point2> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (const auto& p : poly) {
    if (!std::isfinite(p.x()) || !std::isfinite(p.y())) return false;
  }
  if (polygon_area(poly) <= 0.0) return false;
  for (std::size_t i = 0; i < n; ++i) {
    if (poly[i] == poly[(i + 1) % n]) return false;
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (segments_touch(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n])) return false;
    }
  }
  return true;
}

void require_simple(std::span<const Point2> poly) {
  if (!is_simple(poly)) {
    throw DegeneratePolygon("polygon with " + std::to_string(poly.size()) +
                            " vertices is not simple or has zero area");
  }
}

Polygon box_polygon(const Box& box) {
  return {{box.x0, box.y0}, {box.x1, box.y0}, {box.x1, box.y1}, {box.x0, box.y1}};
}

Polygon clip_to_box(std::span<const Point2> poly, const Box& box) {
  Polygon p(poly.begin(), poly.end());
  p = clip_edge(p, [&](const Point2& q) { return q.x() >= box.x0; },
                [&](const Point2& a, const Point2& b) { return cut_x(a, b, box.x0); });
  p = clip_edge(p, [&](const Point2& q) { return q.x() <= box.x1; },
                [&](const Point2& a, const Point2& b) { return cut_x(a, b, box.x1); });
  p = clip_edge(p, [&](const Point2& q) { return q.y() >= box.y0; },
                [&](const Point2& a, const Point2& b) { return cut_y(a, b, box.y0); });
  p = clip_edge(p, [&](const Point2& q) { return q.y() <= box.y1; },
                [&](const Point2& a, const Point2& b) { return cut_y(a, b, box.y1); });
  return p;
}

namespace {

bool strictly_inside(const Point2& p, const Box& b) {
  return p.x() > b.x0 && p.x() < b.x1 && p.y() > b.y0 && p.y() < b.y1;
}

// Whether segment ab passes through the open box (Liang-Barsky on the closed
// box, then the midpoint of the clipped chord).
bool enters(const Point2& a, const Point2& b, const Box& box) {
  const Point2 d = b - a;
  double t0 = 0.0;
  double t1 = 1.0;
  const double p[4] = {-d.x(), d.x(), -d.y(), d.y()};
  const double q[4] = {a.x() - box.x0, box.x1 - a.x(), a.y() - box.y0, box.y1 - a.y()};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return false;
      continue;
    }
    const double t = q[i] / p[i];
    if (p[i] < 0.0) {
      t0 = std::max(t0, t);
    } else {
      t1 = std::min(t1, t);
    }
  }
  if (t0 > t1) return false;
  return strictly_inside(a + 0.5 * (t0 + t1) * d, box);
}

bool point_in_polygon(std::span<const Point2> poly, const Point2& p) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point2& a = poly[i];
    const Point2& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y()) &&
        p.x() < (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x()) {
      in = !in;
    }
  }
  return in;
}

}  // namespace

bool contains_box(std::span<const Point2> poly, const Box& box) {
  if (poly.size() < 3 || box.area() <= 0.0) return false;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    if (enters(poly[i], poly[(i + 1) % poly.size()], box)) return false;
  }
  return point_in_polygon(poly, {0.5 * (box.x0 + box.x1), 0.5 * (box.y0 + box.y1)});
}

double intersection_area(std::span<const Point2> poly, const Box& box) {
  if (box.area() <= 0.0) return 0.0;
  if (contains_box(poly, box)) return box.area();
  const Polygon clipped = clip_to_box(poly, box);
  return clipped.size() < 3 ? 0.0 : std::min(polygon_area(clipped), box.area());
}

}  // namespace posestream
