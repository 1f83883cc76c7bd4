#pragma once

#include <utility>
#include <vector>

#include "gspot/nn.hpp"
#include "gspot/tensor.hpp"

// Graph Reasoning Module: project character-grid features and landmark
// features into interaction space, reason over the joint node set, and
// reproject the character nodes back onto the spatial grid with a residual
// connection. Interaction sizes follow the original coordinate space
// (N = L, C' = C); every map is bias-free.
namespace gspot::grm {

// Z = W_p * psi(X) with W_p = theta(X); both returned because the character
// branch's W_p is reused as the reprojection map.
//   X (L, C), w_theta (N, C), w_psi (C, C') -> W_p (N, L), Z (N, C')
std::pair<Tensor, Tensor> project(const Tensor& x, const Tensor& w_theta, const Tensor& w_psi);

// U = (I - A) V W_r; adjacency and state-update weights are free parameters.
Tensor graph_reason(const Tensor& v, const Tensor& adj, const Tensor& w_r);

// Y = sigma(delta * V'') with delta = (W_p^c)^T; sigma is a bias-free channel map.
Tensor reproject(const Tensor& vpp, const Tensor& wp_c, const Tensor& w_sigma);

class Grm {
 public:
  // spatial_nodes = flattened character-grid positions (196 for 14x14)
  void init(int spatial_nodes, int k_landmarks, int channels, Rng& rng);

  struct Cache {
    Tensor xc, xk;          // flattened inputs
    Tensor wp_c, wp_k;      // node-projection weights
    Tensor psi_c, psi_k;    // dimension projections
    Tensor v, t, u;         // node set, (I-A)V, reasoned nodes
    Tensor vpp, ypre;       // character nodes after reasoning; delta * V''
    int h = 0, w = 0;
  };

  // fc (S,S,C), hk (K, C) -> (S,S,C); residual: output = fc + reprojection
  Tensor forward(const Tensor& fc, const Tensor& hk, Cache& c) const;
  // accumulates parameter grads; writes input grads when pointers given
  void backward(const Tensor& dout, const Cache& c, Tensor* dfc, Tensor* dhk);

  std::vector<nn::ParamRef> params(const std::string& prefix = "grm");

  int nc = 0, k = 0, c = 0;
  // adjacency + state update start at zero so the module is the identity on
  // F_c at initialization; projections start small-random.
  Tensor w_theta_c, w_psi_c;  // (Nc, C), (C, C)
  Tensor w_theta_k, w_psi_k;  // (K, C), (C, C)
  Tensor adj;                 // (Nc+K, Nc+K)
  Tensor w_r;                 // (C, C)
  Tensor w_sigma;             // (C, C)
  Tensor d_w_theta_c, d_w_psi_c, d_w_theta_k, d_w_psi_k, d_adj, d_w_r, d_w_sigma;
};

}  // namespace gspot::grm
