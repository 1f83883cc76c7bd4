#include "gspot/geometry.hpp"

#include <algorithm>

namespace gspot {

double polygon_area(const std::vector<Vec2>& poly) {
  const size_t n = poly.size();
  if (n < 3) return 0.0;
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    acc += cross(a, b);
  }
  return std::abs(acc) * 0.5;
}

double quad_area(const Quad& q) {
  return polygon_area({q.p[0], q.p[1], q.p[2], q.p[3]});
}

namespace {

// Clip polygon against the half-plane on the inner side of edge (a, b),
// where "inner" is the side the rest of the clip quad lies on.
std::vector<Vec2> clip_edge(const std::vector<Vec2>& poly, Vec2 a, Vec2 b, double inner_sign) {
  std::vector<Vec2> out;
  const size_t n = poly.size();
  if (n == 0) return out;
  out.reserve(n + 2);
  auto side = [&](Vec2 p) { return inner_sign * cross(b - a, p - a); };
  for (size_t i = 0; i < n; ++i) {
    const Vec2 cur = poly[i];
    const Vec2 nxt = poly[(i + 1) % n];
    const double sc = side(cur);
    const double sn = side(nxt);
    if (sc >= 0.0) out.push_back(cur);
    if ((sc > 0.0 && sn < 0.0) || (sc < 0.0 && sn > 0.0)) {
      const double t = sc / (sc - sn);
      out.push_back(cur + t * (nxt - cur));
    }
  }
  return out;
}

double signed_area2(const Quad& q) {
  double acc = 0.0;
  for (int i = 0; i < 4; ++i) acc += cross(q.p[i], q.p[(i + 1) % 4]);
  return acc;
}

}  // namespace

double quad_intersection_area(const Quad& a, const Quad& b) {
  const double sign = signed_area2(b) >= 0.0 ? 1.0 : -1.0;
  std::vector<Vec2> poly(a.p.begin(), a.p.end());
  for (int i = 0; i < 4 && !poly.empty(); ++i)
    poly = clip_edge(poly, b.p[i], b.p[(i + 1) % 4], sign);
  return polygon_area(poly);
}

double quad_iou(const Quad& a, const Quad& b) {
  const double inter = quad_intersection_area(a, b);
  const double uni = quad_area(a) + quad_area(b) - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

}  // namespace gspot
