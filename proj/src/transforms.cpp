#include "gspot/transforms.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "gspot/rng.hpp"

namespace gspot {

namespace {
constexpr double kCenter = 0.5;
// Lookup coordinates that land within this distance of a grid point are
// snapped to it, so exact-cell translations reproduce index shifts exactly.
constexpr double kGridSnap = 1e-9;
}  // namespace

Vec2 Transform::apply(Vec2 p) const {
  const double c = std::cos(rotation);
  const double s = std::sin(rotation);
  const double dx = p.x - kCenter;
  const double dy = p.y - kCenter;
  return {scaling * (c * dx - s * dy) + kCenter + translation.x,
          scaling * (s * dx + c * dy) + kCenter + translation.y};
}

Transform Transform::inverse() const {
  if (scaling <= 0.0) throw std::invalid_argument("Transform: scaling must be > 0");
  Transform inv;
  inv.rotation = -rotation;
  inv.scaling = 1.0 / scaling;
  // apply(inv, q) = (1/s) R(-theta) (q - c) + c - (1/s) R(-theta) tau
  const double c = std::cos(-rotation);
  const double s = std::sin(-rotation);
  inv.translation = {-inv.scaling * (c * translation.x - s * translation.y),
                     -inv.scaling * (s * translation.x + c * translation.y)};
  return inv;
}

void TransformRanges::validate() const {
  if (rot_lo > rot_hi || trans_lo > trans_hi || scale_lo > scale_hi)
    throw std::invalid_argument("TransformRanges: empty interval");
  if (scale_lo <= 0.0)
    throw std::invalid_argument("TransformRanges: scaling range must be within (0, inf)");
}

Transform sample_transform(const TransformRanges& ranges, uint64_t rng_seed) {
  ranges.validate();
  Rng rng(rng_seed);
  Transform t;
  t.rotation = rng.uniform(ranges.rot_lo, ranges.rot_hi);
  t.translation.x = rng.uniform(ranges.trans_lo, ranges.trans_hi);
  t.translation.y = rng.uniform(ranges.trans_lo, ranges.trans_hi);
  t.scaling = rng.uniform(ranges.scale_lo, ranges.scale_hi);
  return t;
}

std::vector<Vec2> map_coords(const Transform& t, const std::vector<Vec2>& coords) {
  std::vector<Vec2> out;
  out.reserve(coords.size());
  for (const Vec2& p : coords) out.push_back(t.apply(p));
  return out;
}

void bilinear_sample(const Tensor& patch, double x_norm, double y_norm, double* out,
                     bool zero_outside) {
  const int S = patch.dim(0);
  const int D = patch.dim(2);
  double px = x_norm * (S - 1);
  double py = y_norm * (S - 1);
  if (std::abs(px - std::round(px)) < kGridSnap) px = std::round(px);
  if (std::abs(py - std::round(py)) < kGridSnap) py = std::round(py);

  for (int d = 0; d < D; ++d) out[d] = 0.0;
  if (!zero_outside) {
    px = std::min(std::max(px, 0.0), static_cast<double>(S - 1));
    py = std::min(std::max(py, 0.0), static_cast<double>(S - 1));
  }
  const int x0 = static_cast<int>(std::floor(px));
  const int y0 = static_cast<int>(std::floor(py));
  const double fx = px - x0;
  const double fy = py - y0;
  const double w[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
  const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
  const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
  for (int k = 0; k < 4; ++k) {
    if (w[k] == 0.0) continue;
    if (ys[k] < 0 || ys[k] >= S || xs[k] < 0 || xs[k] >= S) continue;  // zero fill
    const double* row = patch.data() + (static_cast<int64_t>(ys[k]) * S + xs[k]) * D;
    for (int d = 0; d < D; ++d) out[d] += w[k] * row[d];
  }
}

Tensor warp_patch(const Tensor& patch, const Transform& t) {
  if (patch.ndim() != 3 || patch.dim(0) != patch.dim(1))
    throw std::invalid_argument("warp_patch: patch must be square (S, S, D), got " +
                                patch.shape_str());
  if (t.is_identity()) return patch;

  const int S = patch.dim(0);
  const int D = patch.dim(2);
  const Transform inv = t.inverse();
  Tensor out({S, S, D});
  const double denom = S - 1;
  for (int i = 0; i < S; ++i) {
    for (int j = 0; j < S; ++j) {
      const Vec2 src = inv.apply({j / denom, i / denom});
      bilinear_sample(patch, src.x, src.y, out.data() + (static_cast<int64_t>(i) * S + j) * D);
    }
  }
  return out;
}

}  // namespace gspot
