#pragma once

#include <cstdint>
#include <vector>

#include "gspot/geometry.hpp"
#include "gspot/tensor.hpp"

namespace gspot {

// Rotation and scaling act about the patch center (0.5, 0.5) in normalized
// coordinates, translation is applied last:
//   apply(p) = s * R(theta) * (p - c) + c + tau
struct Transform {
  double rotation = 0.0;     // radians
  Vec2 translation{0, 0};    // fraction of patch side
  double scaling = 1.0;

  static Transform identity() { return {}; }
  bool is_identity() const {
    return rotation == 0.0 && translation.x == 0.0 && translation.y == 0.0 && scaling == 1.0;
  }

  Vec2 apply(Vec2 p) const;
  Transform inverse() const;
};

struct TransformRanges {
  double rot_lo = 0.0, rot_hi = 6.283185307179586477;  // (0, 2*pi)
  double trans_lo = -0.2, trans_hi = 0.2;              // per axis
  double scale_lo = 0.7, scale_hi = 1.3;

  void validate() const;  // scaling range must stay positive
};

// Uniform per component; draw order is rotation, tx, ty, scaling.
Transform sample_transform(const TransformRanges& ranges, uint64_t rng_seed);

std::vector<Vec2> map_coords(const Transform& t, const std::vector<Vec2>& coords);

// Resamples a square (S, S, D) patch through the inverse coordinate map, so
// the patch content visually moves by `t`. Out-of-bounds reads are zero.
Tensor warp_patch(const Tensor& patch, const Transform& t);

// Bilinear read of a (S, S, D) patch at normalized coords (x=j/(S-1),
// y=i/(S-1)); out-of-range reads clamp weights to in-bounds neighbors only
// when `zero_outside` is false, else contribute zero.
void bilinear_sample(const Tensor& patch, double x_norm, double y_norm, double* out,
                     bool zero_outside = true);

}  // namespace gspot
