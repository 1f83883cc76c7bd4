#pragma once

#include <array>
#include <cmath>
#include <vector>

namespace gspot {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::sqrt(dot(a, a)); }

// Oriented bounding box: 4 corner points. Axis-aligned boxes use the order
// TL, TR, BR, BL; general quads keep whatever vertex order they were built
// with (area functions handle either winding).
struct Quad {
  std::array<Vec2, 4> p{};

  static Quad axis_aligned(double x0, double y0, double x1, double y1) {
    return Quad{{Vec2{x0, y0}, Vec2{x1, y0}, Vec2{x1, y1}, Vec2{x0, y1}}};
  }

  Vec2 centroid() const {
    return {(p[0].x + p[1].x + p[2].x + p[3].x) / 4.0,
            (p[0].y + p[1].y + p[2].y + p[3].y) / 4.0};
  }

  double min_x() const { return std::min(std::min(p[0].x, p[1].x), std::min(p[2].x, p[3].x)); }
  double max_x() const { return std::max(std::max(p[0].x, p[1].x), std::max(p[2].x, p[3].x)); }
  double min_y() const { return std::min(std::min(p[0].y, p[1].y), std::min(p[2].y, p[3].y)); }
  double max_y() const { return std::max(std::max(p[0].y, p[1].y), std::max(p[2].y, p[3].y)); }

  double width() const { return max_x() - min_x(); }
  double height() const { return max_y() - min_y(); }
};

double polygon_area(const std::vector<Vec2>& poly);  // absolute shoelace area
double quad_area(const Quad& q);

// Intersection area of two convex quads (Sutherland-Hodgman clip).
double quad_intersection_area(const Quad& a, const Quad& b);
double quad_iou(const Quad& a, const Quad& b);

}  // namespace gspot
