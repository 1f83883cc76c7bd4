#include "gspot/gpm.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "gspot/kernels.hpp"

namespace gspot::gpm {

namespace {

bool all_finite(const Tensor& t) {
  for (int64_t i = 0; i < t.numel(); ++i)
    if (!std::isfinite(t[i])) return false;
  return true;
}

// normalized cell coordinates of an S x S grid, x = j/(S-1), y = i/(S-1)
void grid_coords(int s, std::vector<double>& xs, std::vector<double>& ys) {
  xs.resize(static_cast<size_t>(s) * s);
  ys.resize(static_cast<size_t>(s) * s);
  const double inv = s > 1 ? 1.0 / (s - 1) : 0.0;
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) {
      xs[static_cast<size_t>(i) * s + j] = j * inv;
      ys[static_cast<size_t>(i) * s + j] = i * inv;
    }
}

void check_map(const Tensor& m, const char* what) {
  if (m.ndim() != 3 || m.dim(0) != m.dim(1))
    throw std::invalid_argument(std::string(what) + ": landmark map must be (S,S,K), got " +
                                m.shape_str());
}

// per-channel mass; throws when a channel strays off the simplex
std::vector<double> channel_masses(const Tensor& m, const char* what, double tol) {
  const int hw = m.dim(0) * m.dim(1), k = m.dim(2);
  std::vector<double> mass(static_cast<size_t>(k), 0.0);
  for (int p = 0; p < hw; ++p)
    for (int ch = 0; ch < k; ++ch) mass[static_cast<size_t>(ch)] += m[static_cast<int64_t>(p) * k + ch];
  for (int ch = 0; ch < k; ++ch)
    if (std::abs(mass[static_cast<size_t>(ch)] - 1.0) > tol)
      throw std::invalid_argument(std::string(what) + ": channel " + std::to_string(ch) +
                                  " mass " + std::to_string(mass[static_cast<size_t>(ch)]) +
                                  " deviates from 1 (the decomposition assumes unit mass)");
  return mass;
}

}  // namespace

// ---------------------------------------------------------------------------
// GpmNet
// ---------------------------------------------------------------------------

void GpmNet::init(int d_in, int width, int k_landmarks, Rng& rng) {
  d = d_in;
  w = width;
  k = k_landmarks;
  conv1.init(3, 3, d, w, /*stride=*/2, /*pad=*/1, /*bias=*/true, rng);
  conv2.init(3, 3, w, w, 1, 1, true, rng);
  conv3.init(3, 3, w, k, 1, 1, true, rng);
  bn1.init(w);
  bn2.init(w);
}

Tensor GpmNet::forward(const Tensor& h, Cache& c) {
  if (h.ndim() != 3 || h.dim(0) != h.dim(1))
    throw std::invalid_argument("GpmNet: patch must be square (S,S,D), got " + h.shape_str());
  Tensor x = conv1.forward(h, c.c1);
  x = bn1.forward(x, c.b1);
  x = nn::Relu::forward(x, c.r1);
  x = conv2.forward(x, c.c2);
  x = bn2.forward(x, c.b2);
  x = nn::Relu::forward(x, c.r2);
  x = conv3.forward(x, c.c3);
  c.softmax_out = nn::spatial_softmax(x);
  return c.softmax_out;
}

Tensor GpmNet::backward(const Tensor& dmap, const Cache& c) {
  Tensor g = nn::spatial_softmax_backward(dmap, c.softmax_out);
  g = conv3.backward(g, c.c3);
  g = nn::Relu::backward(g, c.r2);
  g = bn2.backward(g, c.b2);
  g = conv2.backward(g, c.c2);
  g = nn::Relu::backward(g, c.r1);
  g = bn1.backward(g, c.b1);
  return conv1.backward(g, c.c1);
}

std::vector<nn::ParamRef> GpmNet::params(const std::string& prefix) {
  std::vector<nn::ParamRef> out;
  conv1.params(prefix + ".conv1", out);
  bn1.params(prefix + ".bn1", out);
  conv2.params(prefix + ".conv2", out);
  bn2.params(prefix + ".bn2", out);
  conv3.params(prefix + ".conv3", out);
  return out;
}

std::vector<nn::ParamRef> GpmNet::norm_state(const std::string& prefix) {
  std::vector<nn::ParamRef> out;
  out.push_back({prefix + ".bn1.running_mean", &bn1.running_mean, nullptr});
  out.push_back({prefix + ".bn1.running_var", &bn1.running_var, nullptr});
  out.push_back({prefix + ".bn2.running_mean", &bn2.running_mean, nullptr});
  out.push_back({prefix + ".bn2.running_var", &bn2.running_var, nullptr});
  return out;
}

void GpmNet::set_frozen(bool frozen) {
  frozen_ = frozen;
  bn1.use_batch_stats = !frozen;
  bn2.use_batch_stats = !frozen;
}

// ---------------------------------------------------------------------------
// landmark extraction
// ---------------------------------------------------------------------------

std::vector<Vec2> soft_argmax(const Tensor& maps) {
  check_map(maps, "soft_argmax");
  const int s = maps.dim(0), k = maps.dim(2);
  std::vector<double> xs, ys;
  grid_coords(s, xs, ys);
  std::vector<Vec2> out(static_cast<size_t>(k), Vec2{0, 0});
  for (int p = 0; p < s * s; ++p) {
    const double* row = maps.data() + static_cast<size_t>(p) * k;
    for (int ch = 0; ch < k; ++ch) {
      out[static_cast<size_t>(ch)].x += xs[static_cast<size_t>(p)] * row[ch];
      out[static_cast<size_t>(ch)].y += ys[static_cast<size_t>(p)] * row[ch];
    }
  }
  return out;
}

Tensor soft_argmax_backward(const Tensor& maps, const std::vector<Vec2>& dcoords) {
  const int s = maps.dim(0), k = maps.dim(2);
  std::vector<double> xs, ys;
  grid_coords(s, xs, ys);
  Tensor dm(maps.shape());
  for (int p = 0; p < s * s; ++p) {
    double* row = dm.data() + static_cast<size_t>(p) * k;
    for (int ch = 0; ch < k; ++ch)
      row[ch] = dcoords[static_cast<size_t>(ch)].x * xs[static_cast<size_t>(p)] +
                dcoords[static_cast<size_t>(ch)].y * ys[static_cast<size_t>(p)];
  }
  return dm;
}

std::vector<Vec2> hard_argmax(const Tensor& maps) {
  check_map(maps, "hard_argmax");
  const int s = maps.dim(0), k = maps.dim(2);
  std::vector<Vec2> out(static_cast<size_t>(k));
  const double inv = s > 1 ? 1.0 / (s - 1) : 0.0;
  for (int ch = 0; ch < k; ++ch) {
    int best = 0;
    double bv = -1e300;
    for (int p = 0; p < s * s; ++p) {
      const double v = maps[static_cast<int64_t>(p) * k + ch];
      if (v > bv) {  // strict: first maximum wins ties
        bv = v;
        best = p;
      }
    }
    out[static_cast<size_t>(ch)] = {(best % s) * inv, (best / s) * inv};
  }
  return out;
}

Tensor extract_landmark_features(const Tensor& h, const std::vector<Vec2>& coords) {
  if (h.ndim() != 3 || h.dim(0) != h.dim(1))
    throw std::invalid_argument("extract_landmark_features: patch must be (S,S,D), got " +
                                h.shape_str());
  const int s = h.dim(0), d = h.dim(2);
  const int k = static_cast<int>(coords.size());
  Tensor out({k, d});
  for (int r = 0; r < k; ++r) {
    const double fx = coords[static_cast<size_t>(r)].x * (s - 1);
    const double fy = coords[static_cast<size_t>(r)].y * (s - 1);
    int ix = static_cast<int>(std::floor(fx));
    int iy = static_cast<int>(std::floor(fy));
    ix = std::min(std::max(ix, 0), s - 2);
    iy = std::min(std::max(iy, 0), s - 2);
    const double tx = fx - ix, ty = fy - iy;
    const double w00 = (1 - tx) * (1 - ty), w10 = tx * (1 - ty);
    const double w01 = (1 - tx) * ty, w11 = tx * ty;
    double* dst = out.data() + static_cast<size_t>(r) * d;
    const double* p00 = h.data() + (static_cast<size_t>(iy) * s + ix) * d;
    const double* p10 = p00 + d;
    const double* p01 = p00 + static_cast<size_t>(s) * d;
    const double* p11 = p01 + d;
    for (int c = 0; c < d; ++c)
      dst[c] = w00 * p00[c] + w10 * p10[c] + w01 * p01[c] + w11 * p11[c];
  }
  return out;
}

void extract_landmark_features_backward(const Tensor& h, const std::vector<Vec2>& coords,
                                        const Tensor& dfeat, Tensor* dh,
                                        std::vector<Vec2>* dcoords) {
  const int s = h.dim(0), d = h.dim(2);
  const int k = static_cast<int>(coords.size());
  if (dcoords) dcoords->assign(static_cast<size_t>(k), Vec2{0, 0});
  for (int r = 0; r < k; ++r) {
    const double fx = coords[static_cast<size_t>(r)].x * (s - 1);
    const double fy = coords[static_cast<size_t>(r)].y * (s - 1);
    int ix = static_cast<int>(std::floor(fx));
    int iy = static_cast<int>(std::floor(fy));
    ix = std::min(std::max(ix, 0), s - 2);
    iy = std::min(std::max(iy, 0), s - 2);
    const double tx = fx - ix, ty = fy - iy;
    const double* g = dfeat.data() + static_cast<size_t>(r) * d;
    const size_t o00 = (static_cast<size_t>(iy) * s + ix) * d;
    const double* p00 = h.data() + o00;
    const double* p10 = p00 + d;
    const double* p01 = p00 + static_cast<size_t>(s) * d;
    const double* p11 = p01 + d;
    if (dh) {
      double* q = dh->data() + o00;
      for (int c = 0; c < d; ++c) {
        q[c] += (1 - tx) * (1 - ty) * g[c];
        q[d + c] += tx * (1 - ty) * g[c];
        q[static_cast<size_t>(s) * d + c] += (1 - tx) * ty * g[c];
        q[static_cast<size_t>(s) * d + d + c] += tx * ty * g[c];
      }
    }
    if (dcoords) {
      // d(out)/dtx = (1-ty)(p10-p00) + ty(p11-p01); dtx/dx = (s-1)
      double gx = 0.0, gy = 0.0;
      for (int c = 0; c < d; ++c) {
        gx += g[c] * ((1 - ty) * (p10[c] - p00[c]) + ty * (p11[c] - p01[c]));
        gy += g[c] * ((1 - tx) * (p01[c] - p00[c]) + tx * (p11[c] - p10[c]));
      }
      (*dcoords)[static_cast<size_t>(r)].x += gx * (s - 1);
      (*dcoords)[static_cast<size_t>(r)].y += gy * (s - 1);
    }
  }
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

double alignment_loss_quadratic(const Tensor& m, const Tensor& mhat, const Transform& t) {
  check_map(m, "alignment_loss_quadratic");
  check_map(mhat, "alignment_loss_quadratic");
  if (!m.same_shape(mhat))
    throw std::invalid_argument("alignment_loss_quadratic: map shapes differ: " + m.shape_str() +
                                " vs " + mhat.shape_str());
  const int s = m.dim(0), k = m.dim(2), hw = s * s;
  std::vector<double> xs, ys;
  grid_coords(s, xs, ys);

  // g(v) = t^-1(v): transformed-frame coordinates carried back to H's frame
  const Transform g = t.inverse();
  std::vector<double> gx(static_cast<size_t>(hw)), gy(static_cast<size_t>(hw));
  for (int p = 0; p < hw; ++p) {
    const Vec2 mapped = g.apply({xs[static_cast<size_t>(p)], ys[static_cast<size_t>(p)]});
    gx[static_cast<size_t>(p)] = mapped.x;
    gy[static_cast<size_t>(p)] = mapped.y;
  }

  std::vector<double> w(static_cast<size_t>(hw));
  double total = 0.0;
  for (int ch = 0; ch < k; ++ch) {
    for (int p = 0; p < hw; ++p) w[static_cast<size_t>(p)] = mhat[static_cast<int64_t>(p) * k + ch];
    double acc = 0.0;
    for (int p = 0; p < hw; ++p) {
      const double mu = m[static_cast<int64_t>(p) * k + ch];
      if (mu == 0.0) continue;
      acc += mu * kern::sq_dist_weighted_sum(xs[static_cast<size_t>(p)], ys[static_cast<size_t>(p)],
                                             gx.data(), gy.data(), w.data(),
                                             static_cast<size_t>(hw));
    }
    total += acc;
  }
  return total / k;
}

double alignment_loss(const Tensor& m, const Tensor& mhat, const Transform& t, Tensor* dm,
                      Tensor* dmhat) {
  check_map(m, "alignment_loss");
  check_map(mhat, "alignment_loss");
  if (!m.same_shape(mhat))
    throw std::invalid_argument("alignment_loss: map shapes differ: " + m.shape_str() + " vs " +
                                mhat.shape_str());
  channel_masses(m, "alignment_loss: M", 1e-3);
  channel_masses(mhat, "alignment_loss: M_hat", 1e-3);

  const int s = m.dim(0), k = m.dim(2), hw = s * s;
  std::vector<double> xs, ys;
  grid_coords(s, xs, ys);
  const Transform g = t.inverse();
  std::vector<double> gx(static_cast<size_t>(hw)), gy(static_cast<size_t>(hw));
  for (int p = 0; p < hw; ++p) {
    const Vec2 mapped = g.apply({xs[static_cast<size_t>(p)], ys[static_cast<size_t>(p)]});
    gx[static_cast<size_t>(p)] = mapped.x;
    gy[static_cast<size_t>(p)] = mapped.y;
  }

  if (dm) *dm = Tensor(m.shape());
  if (dmhat) *dmhat = Tensor(m.shape());

  double total = 0.0;
  for (int ch = 0; ch < k; ++ch) {
    double a = 0.0, b = 0.0, mux = 0.0, muy = 0.0, nux = 0.0, nuy = 0.0;
    for (int p = 0; p < hw; ++p) {
      const size_t ps = static_cast<size_t>(p);
      const double mv = m[static_cast<int64_t>(p) * k + ch];
      const double hv = mhat[static_cast<int64_t>(p) * k + ch];
      a += (xs[ps] * xs[ps] + ys[ps] * ys[ps]) * mv;
      b += (gx[ps] * gx[ps] + gy[ps] * gy[ps]) * hv;
      mux += xs[ps] * mv;
      muy += ys[ps] * mv;
      nux += gx[ps] * hv;
      nuy += gy[ps] * hv;
    }
    total += a + b - 2.0 * (mux * nux + muy * nuy);
    if (dm)
      for (int p = 0; p < hw; ++p) {
        const size_t ps = static_cast<size_t>(p);
        (*dm)[static_cast<int64_t>(p) * k + ch] =
            (xs[ps] * xs[ps] + ys[ps] * ys[ps] - 2.0 * (xs[ps] * nux + ys[ps] * nuy)) / k;
      }
    if (dmhat)
      for (int p = 0; p < hw; ++p) {
        const size_t ps = static_cast<size_t>(p);
        (*dmhat)[static_cast<int64_t>(p) * k + ch] =
            (gx[ps] * gx[ps] + gy[ps] * gy[ps] - 2.0 * (gx[ps] * mux + gy[ps] * muy)) / k;
      }
  }
  return total / k;
}

double diversity_loss(const Tensor& m, Tensor* dm, int pool_cell) {
  check_map(m, "diversity_loss");
  if (pool_cell < 1) throw std::invalid_argument("diversity_loss: pool_cell must be >= 1");
  const int s = m.dim(0), k = m.dim(2);
  const int cells = (s + pool_cell - 1) / pool_cell;  // zero-pad up to a multiple

  if (dm) *dm = Tensor(m.shape());

  // mass pooling: each pooled cell holds the probability mass of its block
  double sum_max = 0.0;
  std::vector<double> pooled(static_cast<size_t>(k));
  for (int ci = 0; ci < cells; ++ci)
    for (int cj = 0; cj < cells; ++cj) {
      std::fill(pooled.begin(), pooled.end(), 0.0);
      const int i1 = std::min((ci + 1) * pool_cell, s), j1 = std::min((cj + 1) * pool_cell, s);
      for (int i = ci * pool_cell; i < i1; ++i)
        for (int j = cj * pool_cell; j < j1; ++j) {
          const double* row = m.data() + (static_cast<size_t>(i) * s + j) * k;
          for (int ch = 0; ch < k; ++ch) pooled[static_cast<size_t>(ch)] += row[ch];
        }
      int best = 0;
      for (int ch = 1; ch < k; ++ch)
        if (pooled[static_cast<size_t>(ch)] > pooled[static_cast<size_t>(best)]) best = ch;
      sum_max += pooled[static_cast<size_t>(best)];
      if (dm)  // subgradient: the winning channel's block mass enters with -1
        for (int i = ci * pool_cell; i < i1; ++i)
          for (int j = cj * pool_cell; j < j1; ++j)
            (*dm)[(static_cast<int64_t>(i) * s + j) * k + best] -= 1.0;
    }
  return k - sum_max;
}

std::vector<int> pooled_cell_of(const std::vector<Vec2>& coords, int map_size, int pool_cell) {
  const int cells = (map_size + pool_cell - 1) / pool_cell;
  std::vector<int> out;
  out.reserve(coords.size());
  for (const Vec2& c : coords) {
    int j = static_cast<int>(std::lround(c.x * (map_size - 1)));
    int i = static_cast<int>(std::lround(c.y * (map_size - 1)));
    j = std::min(std::max(j, 0), map_size - 1);
    i = std::min(std::max(i, 0), map_size - 1);
    out.push_back((i / pool_cell) * cells + (j / pool_cell));
  }
  return out;
}

// ---------------------------------------------------------------------------
// training step
// ---------------------------------------------------------------------------

GpmStepResult gpm_train_step(const Tensor& h, GpmNet& net, const TransformRanges& ranges,
                             double lambda, uint64_t rng_seed, double align_weight) {
  if (lambda < 0) throw std::invalid_argument("gpm_train_step: lambda must be >= 0");
  if (align_weight < 0) throw std::invalid_argument("gpm_train_step: align weight must be >= 0");
  const Transform t = sample_transform(ranges, rng_seed);
  const Tensor hhat = warp_patch(h, t);

  GpmNet::Cache ca, cb;
  const Tensor m = net.forward(h, ca);
  const Tensor mhat = net.forward(hhat, cb);

  GpmStepResult res;
  Tensor dm_align, dmhat_align;
  res.align = alignment_loss(m, mhat, t, &dm_align, &dmhat_align);
  if (!std::isfinite(res.align))
    throw std::runtime_error("gpm_train_step: alignment loss is non-finite");

  Tensor dm_div;
  res.div = diversity_loss(m, lambda > 0 ? &dm_div : nullptr);
  if (!std::isfinite(res.div))
    throw std::runtime_error("gpm_train_step: diversity loss is non-finite");

  res.loss = align_weight * res.align + lambda * res.div;

  Tensor dm = dm_align;
  kern::scal(align_weight, dm.data(), static_cast<size_t>(dm.numel()));
  kern::scal(align_weight, dmhat_align.data(), static_cast<size_t>(dmhat_align.numel()));
  if (lambda > 0) kern::axpy(lambda, dm_div.data(), dm.data(), static_cast<size_t>(dm.numel()));
  const Tensor dh_unused_a = net.backward(dm, ca);
  const Tensor dh_unused_b = net.backward(dmhat_align, cb);
  if (!all_finite(dh_unused_a) || !all_finite(dh_unused_b))
    throw std::runtime_error("gpm_train_step: non-finite gradient in landmark net backward");
  return res;
}

double mean_equivariance_displacement(GpmNet& net, const Tensor& h, const Transform& t) {
  GpmNet::Cache ca, cb;
  const std::vector<Vec2> c0 = soft_argmax(net.forward(h, ca));
  const std::vector<Vec2> c1 = soft_argmax(net.forward(warp_patch(h, t), cb));
  double acc = 0.0;
  for (size_t r = 0; r < c0.size(); ++r) acc += norm(c1[r] - t.apply(c0[r]));
  return acc / static_cast<double>(c0.size());
}

}  // namespace gspot::gpm
