#pragma once

#include <cstdint>
#include <vector>

#include "gspot/geometry.hpp"
#include "gspot/nn.hpp"
#include "gspot/tensor.hpp"
#include "gspot/transforms.hpp"

// Geometric Prior Module: a 3-layer landmark detector over character feature
// patches plus the unsupervised alignment/diversity objectives that train it.
namespace gspot::gpm {

// conv3x3 stride 2 -> BN -> ReLU -> conv3x3 -> BN -> ReLU -> conv3x3 (K maps)
// -> per-channel spatial softmax. A (70,70,D) patch yields (35,35,K).
class GpmNet {
 public:
  void init(int d_in, int width, int k_landmarks, Rng& rng);

  struct Cache {
    nn::Conv2d::Cache c1, c2, c3;
    nn::BatchNorm::Cache b1, b2;
    nn::Relu::Cache r1, r2;
    Tensor softmax_out;
  };

  Tensor forward(const Tensor& h, Cache& c);       // landmark map, channels sum to 1
  Tensor backward(const Tensor& dmap, const Cache& c);  // accumulates grads, returns dH
  std::vector<nn::ParamRef> params(const std::string& prefix = "gpm");
  // running normalization statistics (checkpoint state, never optimized)
  std::vector<nn::ParamRef> norm_state(const std::string& prefix = "gpm");

  // Frozen mode: normalization statistics are read, never updated (stage 3).
  void set_frozen(bool frozen);
  bool frozen() const { return frozen_; }

  int d = 0, w = 0, k = 0;
  nn::Conv2d conv1, conv2, conv3;
  nn::BatchNorm bn1, bn2;

 private:
  bool frozen_ = false;
};

// Expected coordinate of each channel, in normalized [0,1]^2 (x = j/(S-1)).
std::vector<Vec2> soft_argmax(const Tensor& maps);
Tensor soft_argmax_backward(const Tensor& maps, const std::vector<Vec2>& dcoords);

// Hard argmax per channel (visualization only); deterministic first-max tie-break.
std::vector<Vec2> hard_argmax(const Tensor& maps);

// Bilinear gather of K feature rows from a (S,S,D) patch; differentiable in
// both the patch and the coordinates.
Tensor extract_landmark_features(const Tensor& h, const std::vector<Vec2>& coords);
void extract_landmark_features_backward(const Tensor& h, const std::vector<Vec2>& coords,
                                        const Tensor& dfeat, Tensor* dh,
                                        std::vector<Vec2>* dcoords);

// Expected squared distance between the two landmark distributions under the
// coordinate map g = t^-1 (the transformed map's coordinates carried back to
// the original frame). Quadratic form: the O((HW)^2) reference oracle.
double alignment_loss_quadratic(const Tensor& m, const Tensor& mhat, const Transform& t);

// Linear-time decomposition; requires unit channel mass (error beyond 1e-3).
// Optional gradients are the exact derivatives of this decomposed form.
double alignment_loss(const Tensor& m, const Tensor& mhat, const Transform& t,
                      Tensor* dm = nullptr, Tensor* dmhat = nullptr);

// K - sum_cell max_r P(cell|r) over the mass-pooled map (block sums of
// pool_cell x pool_cell, zero-padded up to a multiple). Range [0, K-1].
double diversity_loss(const Tensor& m, Tensor* dm = nullptr, int pool_cell = 4);

// Pooled-cell index of each landmark coordinate on the padded grid; used to
// check that no two landmarks collapse into one pooled cell.
std::vector<int> pooled_cell_of(const std::vector<Vec2>& coords, int map_size = 35,
                                int pool_cell = 4);

struct GpmStepResult {
  double loss = 0.0;
  double align = 0.0;
  double div = 0.0;
};

// One unsupervised step: sample t, warp, run both branches through the net,
// and accumulate parameter gradients of align_weight * L_align + lambda *
// L_div (align_weight != 1 only in objective ablations; reported align/div
// stay unweighted).
GpmStepResult gpm_train_step(const Tensor& h, GpmNet& net, const TransformRanges& ranges,
                             double lambda, uint64_t rng_seed, double align_weight = 1.0);

// Mean distance between predicted landmarks of the warped patch and the
// forward-mapped landmarks of the original; the equivariance figure of merit.
double mean_equivariance_displacement(GpmNet& net, const Tensor& h, const Transform& t);

}  // namespace gspot::gpm
