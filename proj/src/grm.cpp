#include "gspot/grm.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "gspot/kernels.hpp"

namespace gspot::grm {

namespace {

void check_finite(const Tensor& t, const char* stage) {
  for (int64_t i = 0; i < t.numel(); ++i)
    if (!std::isfinite(t[i]))
      throw std::runtime_error(std::string("grm: non-finite value after ") + stage);
}

}  // namespace

std::pair<Tensor, Tensor> project(const Tensor& x, const Tensor& w_theta, const Tensor& w_psi) {
  if (x.ndim() != 2 || w_theta.ndim() != 2 || w_psi.ndim() != 2)
    throw std::invalid_argument("grm::project: all arguments must be matrices");
  const int l = x.dim(0), c = x.dim(1);
  const int n = w_theta.dim(0);
  if (w_theta.dim(1) != c)
    throw std::invalid_argument("grm::project: w_theta is " + w_theta.shape_str() +
                                ", expected (N," + std::to_string(c) + ")");
  if (w_psi.dim(0) != c)
    throw std::invalid_argument("grm::project: w_psi is " + w_psi.shape_str() + ", expected (" +
                                std::to_string(c) + ",C')");
  const int cp = w_psi.dim(1);

  Tensor wp({n, l});  // W_p = w_theta * X^T
  kern::matmul_nt(w_theta.data(), x.data(), wp.data(), n, c, l);
  Tensor psi({l, cp});  // psi = X * w_psi
  kern::matmul_nn(x.data(), w_psi.data(), psi.data(), l, c, cp);
  Tensor z({n, cp});
  kern::matmul_nn(wp.data(), psi.data(), z.data(), n, l, cp);
  return {std::move(z), std::move(wp)};
}

Tensor graph_reason(const Tensor& v, const Tensor& adj, const Tensor& w_r) {
  const int n = v.dim(0), c = v.dim(1);
  if (adj.ndim() != 2 || adj.dim(0) != n || adj.dim(1) != n)
    throw std::invalid_argument("grm::graph_reason: adjacency is " + adj.shape_str() +
                                ", expected (" + std::to_string(n) + "," + std::to_string(n) + ")");
  if (w_r.dim(0) != c || w_r.dim(1) != c)
    throw std::invalid_argument("grm::graph_reason: w_r is " + w_r.shape_str() + ", expected (" +
                                std::to_string(c) + "," + std::to_string(c) + ")");
  Tensor t = v;  // T = V - A V
  Tensor av({n, c});
  kern::matmul_nn(adj.data(), v.data(), av.data(), n, n, c);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] -= av[i];
  Tensor u({n, c});
  kern::matmul_nn(t.data(), w_r.data(), u.data(), n, c, c);
  check_finite(u, "graph reasoning");
  return u;
}

Tensor reproject(const Tensor& vpp, const Tensor& wp_c, const Tensor& w_sigma) {
  const int n = vpp.dim(0), c = vpp.dim(1);
  if (wp_c.dim(0) != n)
    throw std::invalid_argument("grm::reproject: wp_c is " + wp_c.shape_str() +
                                ", expected node count " + std::to_string(n));
  const int l = wp_c.dim(1);
  Tensor ypre({l, c});  // delta * V'' with delta = wp_c^T
  kern::matmul_tn(wp_c.data(), vpp.data(), ypre.data(), l, n, c);
  Tensor y({l, w_sigma.dim(1)});
  kern::matmul_nn(ypre.data(), w_sigma.data(), y.data(), l, c, w_sigma.dim(1));
  return y;
}

// ---------------------------------------------------------------------------
// Grm
// ---------------------------------------------------------------------------

void Grm::init(int spatial_nodes, int k_landmarks, int channels, Rng& rng) {
  nc = spatial_nodes;
  k = k_landmarks;
  c = channels;
  // Projection scales keep the quadratic node features Z = (W_theta X^T)(X W_psi)
  // and the reprojection at the input's magnitude: each Z entry sums L products
  // of two projections, so var(Z) ~ L C^2 s^4 — s = (C sqrt(L))^-1/2 makes that
  // O(1) and keeps early finetuning gradients tame.
  const double sc = 1.0 / std::sqrt(channels * std::sqrt(static_cast<double>(spatial_nodes)));
  const double sk = 1.0 / std::sqrt(channels * std::sqrt(static_cast<double>(k_landmarks)));
  w_theta_c = randn({nc, c}, rng, sc);
  w_psi_c = randn({c, c}, rng, sc);
  w_theta_k = randn({k, c}, rng, sk);
  w_psi_k = randn({c, c}, rng, sk);
  adj = Tensor({nc + k, nc + k});  // zero: reasoning starts as a no-op
  w_r = Tensor({c, c});            // zero: output = F_c at initialization
  w_sigma = randn({c, c}, rng, sc);
  d_w_theta_c = Tensor({nc, c});
  d_w_psi_c = Tensor({c, c});
  d_w_theta_k = Tensor({k, c});
  d_w_psi_k = Tensor({c, c});
  d_adj = Tensor({nc + k, nc + k});
  d_w_r = Tensor({c, c});
  d_w_sigma = Tensor({c, c});
}

Tensor Grm::forward(const Tensor& fc, const Tensor& hk, Cache& cc) const {
  if (fc.ndim() != 3 || fc.dim(2) != c)
    throw std::invalid_argument("grm: F_c must be (S,S," + std::to_string(c) + "), got " +
                                fc.shape_str());
  if (fc.dim(0) * fc.dim(1) != nc)
    throw std::invalid_argument("grm: F_c spatial extent " + fc.shape_str() + " gives " +
                                std::to_string(fc.dim(0) * fc.dim(1)) + " nodes, module built for " +
                                std::to_string(nc));
  if (hk.ndim() != 2 || hk.dim(0) != k || hk.dim(1) != c)
    throw std::invalid_argument("grm: H_k must be (" + std::to_string(k) + "," +
                                std::to_string(c) + "), got " + hk.shape_str());
  cc.h = fc.dim(0);
  cc.w = fc.dim(1);
  cc.xc = fc.reshaped({nc, c});
  cc.xk = hk;

  auto [zc, wpc] = project(cc.xc, w_theta_c, w_psi_c);
  auto [zk, wpk] = project(cc.xk, w_theta_k, w_psi_k);
  cc.wp_c = std::move(wpc);
  cc.wp_k = std::move(wpk);
  // psi caches recomputed here to avoid a second project API; cheap relative to Z
  cc.psi_c = Tensor({nc, c});
  kern::matmul_nn(cc.xc.data(), w_psi_c.data(), cc.psi_c.data(), nc, c, c);
  cc.psi_k = Tensor({k, c});
  kern::matmul_nn(cc.xk.data(), w_psi_k.data(), cc.psi_k.data(), k, c, c);

  const int ntot = nc + k;
  cc.v = Tensor({ntot, c});
  std::memcpy(cc.v.data(), zc.data(), sizeof(double) * static_cast<size_t>(zc.numel()));
  std::memcpy(cc.v.data() + static_cast<size_t>(nc) * c, zk.data(),
              sizeof(double) * static_cast<size_t>(zk.numel()));

  // T = V - A V kept for the W_r gradient
  Tensor av({ntot, c});
  kern::matmul_nn(adj.data(), cc.v.data(), av.data(), ntot, ntot, c);
  cc.t = cc.v;
  for (int64_t i = 0; i < cc.t.numel(); ++i) cc.t[i] -= av[i];
  cc.u = Tensor({ntot, c});
  kern::matmul_nn(cc.t.data(), w_r.data(), cc.u.data(), ntot, c, c);
  check_finite(cc.u, "graph reasoning");

  cc.vpp = Tensor({nc, c});  // character nodes; landmark nodes W'' are discarded
  std::memcpy(cc.vpp.data(), cc.u.data(), sizeof(double) * static_cast<size_t>(cc.vpp.numel()));

  cc.ypre = Tensor({nc, c});
  kern::matmul_tn(cc.wp_c.data(), cc.vpp.data(), cc.ypre.data(), nc, nc, c);
  Tensor y({nc, c});
  kern::matmul_nn(cc.ypre.data(), w_sigma.data(), y.data(), nc, c, c);
  check_finite(y, "reprojection");

  Tensor out = fc;  // residual connection
  kern::axpy(1.0, y.data(), out.data(), static_cast<size_t>(out.numel()));
  return out;
}

void Grm::backward(const Tensor& dout, const Cache& cc, Tensor* dfc, Tensor* dhk) {
  const int ntot = nc + k;
  const Tensor dy = dout.reshaped({nc, c});

  // reprojection: y = ypre * w_sigma
  kern::matmul_tn(cc.ypre.data(), dy.data(), d_w_sigma.data(), c, nc, c, /*accumulate=*/true);
  Tensor dypre({nc, c});
  kern::matmul_nt(dy.data(), w_sigma.data(), dypre.data(), nc, c, c);

  // ypre = wp_c^T * vpp
  Tensor dvpp({nc, c});
  kern::matmul_nn(cc.wp_c.data(), dypre.data(), dvpp.data(), nc, nc, c);
  Tensor dwp_c({nc, nc});  // reproject path: += vpp * dypre^T
  kern::matmul_nt(cc.vpp.data(), dypre.data(), dwp_c.data(), nc, c, nc);

  // graph reasoning: u = t * w_r, t = v - adj * v
  Tensor du({ntot, c});
  du.zero_();
  std::memcpy(du.data(), dvpp.data(), sizeof(double) * static_cast<size_t>(dvpp.numel()));
  kern::matmul_tn(cc.t.data(), du.data(), d_w_r.data(), c, ntot, c, /*accumulate=*/true);
  Tensor dt({ntot, c});
  kern::matmul_nt(du.data(), w_r.data(), dt.data(), ntot, c, c);

  Tensor dtneg = dt;
  kern::scal(-1.0, dtneg.data(), static_cast<size_t>(dtneg.numel()));
  kern::matmul_nt(dtneg.data(), cc.v.data(), d_adj.data(), ntot, c, ntot, /*accumulate=*/true);
  Tensor dv = dt;  // direct path of T = V - A V
  kern::matmul_tn(adj.data(), dtneg.data(), dv.data(), ntot, ntot, c, /*accumulate=*/true);

  // split node grads and run both projection backwards
  auto project_backward = [&](const Tensor& x, const Tensor& w_theta, const Tensor& w_psi,
                              const Tensor& wp, const Tensor& psi, const double* dz_ptr, int n,
                              int l, Tensor& d_w_theta, Tensor& d_w_psi, Tensor* dx,
                              Tensor* dwp_extra) {
    Tensor dwp({n, l});
    kern::matmul_nt(dz_ptr, psi.data(), dwp.data(), n, c, l);
    if (dwp_extra)
      kern::axpy(1.0, dwp_extra->data(), dwp.data(), static_cast<size_t>(dwp.numel()));
    Tensor dpsi({l, c});
    kern::matmul_tn(wp.data(), dz_ptr, dpsi.data(), l, n, c);
    // W_p = w_theta * X^T
    kern::matmul_nn(dwp.data(), x.data(), d_w_theta.data(), n, l, c, /*accumulate=*/true);
    // psi = X * w_psi
    kern::matmul_tn(x.data(), dpsi.data(), d_w_psi.data(), c, l, c, /*accumulate=*/true);
    if (dx) {
      *dx = Tensor({l, c});
      kern::matmul_tn(dwp.data(), w_theta.data(), dx->data(), l, n, c);
      kern::matmul_nt(dpsi.data(), w_psi.data(), dx->data(), l, c, c, /*accumulate=*/true);
    }
  };

  Tensor dxc, dxk;
  project_backward(cc.xc, w_theta_c, w_psi_c, cc.wp_c, cc.psi_c, dv.data(), nc, nc,
                   d_w_theta_c, d_w_psi_c, dfc ? &dxc : nullptr, &dwp_c);
  project_backward(cc.xk, w_theta_k, w_psi_k, cc.wp_k, cc.psi_k,
                   dv.data() + static_cast<size_t>(nc) * c, k, k, d_w_theta_k, d_w_psi_k,
                   dhk ? &dxk : nullptr, nullptr);

  if (dfc) {
    *dfc = dout;  // residual path
    kern::axpy(1.0, dxc.data(), dfc->data(), static_cast<size_t>(dfc->numel()));
  }
  if (dhk) *dhk = std::move(dxk);
}

std::vector<nn::ParamRef> Grm::params(const std::string& prefix) {
  return {
      {prefix + ".w_theta_c", &w_theta_c, &d_w_theta_c},
      {prefix + ".w_psi_c", &w_psi_c, &d_w_psi_c},
      {prefix + ".w_theta_k", &w_theta_k, &d_w_theta_k},
      {prefix + ".w_psi_k", &w_psi_k, &d_w_psi_k},
      {prefix + ".adj", &adj, &d_adj},
      {prefix + ".w_r", &w_r, &d_w_r},
      {prefix + ".w_sigma", &w_sigma, &d_w_sigma},
  };
}

}  // namespace gspot::grm
