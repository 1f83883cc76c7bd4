#include "gspot/nn.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "gspot/kernels.hpp"

namespace gspot::nn {

namespace {

int conv_out(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

void im2col(const Tensor& x, int kh, int kw, int stride, int pad, int hout, int wout,
            Tensor& cols) {
  const int hin = x.dim(0), win = x.dim(1), cin = x.dim(2);
  const int row_len = kh * kw * cin;
  cols = Tensor({hout * wout, row_len});  // zero-filled: padding contributes nothing
  const double* src = x.data();
  for (int i = 0; i < hout; ++i)
    for (int j = 0; j < wout; ++j) {
      double* row = cols.data() + (static_cast<size_t>(i) * wout + j) * row_len;
      for (int dy = 0; dy < kh; ++dy) {
        const int y = i * stride + dy - pad;
        if (y < 0 || y >= hin) continue;
        for (int dx = 0; dx < kw; ++dx) {
          const int xx = j * stride + dx - pad;
          if (xx < 0 || xx >= win) continue;
          std::memcpy(row + (dy * kw + dx) * cin,
                      src + (static_cast<size_t>(y) * win + xx) * cin,
                      sizeof(double) * static_cast<size_t>(cin));
        }
      }
    }
}

void col2im_add(const Tensor& dcols, int kh, int kw, int stride, int pad, int hin, int win,
                int cin, int hout, int wout, Tensor& dx) {
  const int row_len = kh * kw * cin;
  for (int i = 0; i < hout; ++i)
    for (int j = 0; j < wout; ++j) {
      const double* row = dcols.data() + (static_cast<size_t>(i) * wout + j) * row_len;
      for (int dy = 0; dy < kh; ++dy) {
        const int y = i * stride + dy - pad;
        if (y < 0 || y >= hin) continue;
        for (int dxk = 0; dxk < kw; ++dxk) {
          const int xx = j * stride + dxk - pad;
          if (xx < 0 || xx >= win) continue;
          kern::axpy(1.0, row + (dy * kw + dxk) * cin,
                     dx.data() + (static_cast<size_t>(y) * win + xx) * cin,
                     static_cast<size_t>(cin));
        }
      }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

void Conv2d::init(int kh_, int kw_, int cin_, int cout_, int stride_, int pad_, bool bias,
                  Rng& rng) {
  kh = kh_;
  kw = kw_;
  cin = cin_;
  cout = cout_;
  stride = stride_;
  pad = pad_;
  has_bias = bias;
  const double stdev = std::sqrt(2.0 / (kh * kw * cin));  // He init
  w = randn({kh * kw * cin, cout}, rng, stdev);
  dw = Tensor({kh * kw * cin, cout});
  if (has_bias) {
    b = Tensor({cout});
    db = Tensor({cout});
  }
}

Tensor Conv2d::forward(const Tensor& x, Cache& c) const {
  if (x.ndim() != 3)
    throw std::invalid_argument("Conv2d: input must be (H,W,C), got " + x.shape_str());
  if (x.dim(2) != cin)
    throw std::invalid_argument("Conv2d: channel axis mismatch: input has " +
                                std::to_string(x.dim(2)) + ", layer expects " +
                                std::to_string(cin));
  const int hout = conv_out(x.dim(0), kh, stride, pad);
  const int wout = conv_out(x.dim(1), kw, stride, pad);
  if (hout <= 0 || wout <= 0)
    throw std::invalid_argument("Conv2d: input " + x.shape_str() + " too small for kernel");
  c.hin = x.dim(0);
  c.win = x.dim(1);
  im2col(x, kh, kw, stride, pad, hout, wout, c.cols);
  Tensor y({hout, wout, cout});
  kern::matmul_nn(c.cols.data(), w.data(), y.data(), hout * wout, kh * kw * cin, cout);
  if (has_bias)
    for (int p = 0; p < hout * wout; ++p)
      kern::axpy(1.0, b.data(), y.data() + static_cast<size_t>(p) * cout,
                 static_cast<size_t>(cout));
  return y;
}

Tensor Conv2d::backward(const Tensor& dy, const Cache& c) {
  const int hout = dy.dim(0), wout = dy.dim(1);
  const int M = hout * wout, K = kh * kw * cin;
  kern::matmul_tn(c.cols.data(), dy.data(), dw.data(), K, M, cout, /*accumulate=*/true);
  if (has_bias)
    for (int p = 0; p < M; ++p)
      kern::axpy(1.0, dy.data() + static_cast<size_t>(p) * cout, db.data(),
                 static_cast<size_t>(cout));
  Tensor dcols({M, K});
  kern::matmul_nt(dy.data(), w.data(), dcols.data(), M, cout, K);
  Tensor dx({c.hin, c.win, cin});
  col2im_add(dcols, kh, kw, stride, pad, c.hin, c.win, cin, hout, wout, dx);
  return dx;
}

void Conv2d::params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".w", &w, &dw});
  if (has_bias) out.push_back({prefix + ".b", &b, &db});
}

// ---------------------------------------------------------------------------
// BatchNorm
// ---------------------------------------------------------------------------

void BatchNorm::init(int channels) {
  c = channels;
  gamma = Tensor::full({c}, 1.0);
  beta = Tensor({c});
  running_mean = Tensor({c});
  running_var = Tensor::full({c}, 1.0);
  dgamma = Tensor({c});
  dbeta = Tensor({c});
}

Tensor BatchNorm::forward(const Tensor& x, Cache& cc) {
  if (x.ndim() != 3 || x.dim(2) != c)
    throw std::invalid_argument("BatchNorm: expected (H,W," + std::to_string(c) + "), got " +
                                x.shape_str());
  const int hw = x.dim(0) * x.dim(1);
  cc.hw = hw;
  cc.inv_std.assign(static_cast<size_t>(c), 0.0);
  std::vector<double> mean(static_cast<size_t>(c), 0.0), var(static_cast<size_t>(c), 0.0);

  if (use_batch_stats) {
    for (int p = 0; p < hw; ++p) {
      const double* row = x.data() + static_cast<size_t>(p) * c;
      for (int k = 0; k < c; ++k) mean[static_cast<size_t>(k)] += row[k];
    }
    for (int k = 0; k < c; ++k) mean[static_cast<size_t>(k)] /= hw;
    for (int p = 0; p < hw; ++p) {
      const double* row = x.data() + static_cast<size_t>(p) * c;
      for (int k = 0; k < c; ++k) {
        const double d = row[k] - mean[static_cast<size_t>(k)];
        var[static_cast<size_t>(k)] += d * d;
      }
    }
    for (int k = 0; k < c; ++k) {
      var[static_cast<size_t>(k)] /= hw;
      running_mean[k] = (1.0 - momentum) * running_mean[k] + momentum * mean[static_cast<size_t>(k)];
      running_var[k] = (1.0 - momentum) * running_var[k] + momentum * var[static_cast<size_t>(k)];
    }
  } else {
    for (int k = 0; k < c; ++k) {
      mean[static_cast<size_t>(k)] = running_mean[k];
      var[static_cast<size_t>(k)] = running_var[k];
    }
  }
  for (int k = 0; k < c; ++k)
    cc.inv_std[static_cast<size_t>(k)] = 1.0 / std::sqrt(var[static_cast<size_t>(k)] + eps);

  cc.xhat = Tensor(x.shape());
  Tensor y(x.shape());
  for (int p = 0; p < hw; ++p) {
    const double* row = x.data() + static_cast<size_t>(p) * c;
    double* xh = cc.xhat.data() + static_cast<size_t>(p) * c;
    double* yo = y.data() + static_cast<size_t>(p) * c;
    for (int k = 0; k < c; ++k) {
      xh[k] = (row[k] - mean[static_cast<size_t>(k)]) * cc.inv_std[static_cast<size_t>(k)];
      yo[k] = gamma[k] * xh[k] + beta[k];
    }
  }
  return y;
}

Tensor BatchNorm::backward(const Tensor& dy, const Cache& cc) {
  const int hw = cc.hw;
  std::vector<double> sum_dy(static_cast<size_t>(c), 0.0), sum_dyxh(static_cast<size_t>(c), 0.0);
  for (int p = 0; p < hw; ++p) {
    const double* dr = dy.data() + static_cast<size_t>(p) * c;
    const double* xh = cc.xhat.data() + static_cast<size_t>(p) * c;
    for (int k = 0; k < c; ++k) {
      sum_dy[static_cast<size_t>(k)] += dr[k];
      sum_dyxh[static_cast<size_t>(k)] += dr[k] * xh[k];
    }
  }
  for (int k = 0; k < c; ++k) {
    dbeta[k] += sum_dy[static_cast<size_t>(k)];
    dgamma[k] += sum_dyxh[static_cast<size_t>(k)];
  }

  Tensor dx(dy.shape());
  if (use_batch_stats) {
    for (int p = 0; p < hw; ++p) {
      const double* dr = dy.data() + static_cast<size_t>(p) * c;
      const double* xh = cc.xhat.data() + static_cast<size_t>(p) * c;
      double* dxp = dx.data() + static_cast<size_t>(p) * c;
      for (int k = 0; k < c; ++k) {
        const size_t ks = static_cast<size_t>(k);
        dxp[k] = gamma[k] * cc.inv_std[ks] / hw *
                 (hw * dr[k] - sum_dy[ks] - xh[k] * sum_dyxh[ks]);
      }
    }
  } else {
    // running statistics are constants: a plain affine map
    for (int p = 0; p < hw; ++p) {
      const double* dr = dy.data() + static_cast<size_t>(p) * c;
      double* dxp = dx.data() + static_cast<size_t>(p) * c;
      for (int k = 0; k < c; ++k) dxp[k] = dr[k] * gamma[k] * cc.inv_std[static_cast<size_t>(k)];
    }
  }
  return dx;
}

void BatchNorm::params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".gamma", &gamma, &dgamma});
  out.push_back({prefix + ".beta", &beta, &dbeta});
}

// ---------------------------------------------------------------------------
// Relu / Linear
// ---------------------------------------------------------------------------

Tensor Relu::forward(const Tensor& x, Cache& c) {
  Tensor y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  c.y = y;
  return y;
}

Tensor Relu::backward(const Tensor& dy, const Cache& c) {
  Tensor dx(dy.shape());
  for (int64_t i = 0; i < dy.numel(); ++i) dx[i] = c.y[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

void Linear::init(int in_dim, int out_dim, bool bias, Rng& rng) {
  in = in_dim;
  out = out_dim;
  has_bias = bias;
  w = randn({in, out}, rng, std::sqrt(2.0 / in));
  dw = Tensor({in, out});
  if (has_bias) {
    b = Tensor({out});
    db = Tensor({out});
  }
}

Tensor Linear::forward(const Tensor& x, Cache& c) const {
  const int64_t n = x.numel() / in;
  if (n * in != x.numel())
    throw std::invalid_argument("Linear: input " + x.shape_str() + " not divisible by in=" +
                                std::to_string(in));
  c.x = x.reshaped({static_cast<int>(n), in});
  Tensor y({static_cast<int>(n), out});
  kern::matmul_nn(c.x.data(), w.data(), y.data(), static_cast<int>(n), in, out);
  if (has_bias)
    for (int64_t p = 0; p < n; ++p)
      kern::axpy(1.0, b.data(), y.data() + p * out, static_cast<size_t>(out));
  if (x.ndim() == 1) y.reshape_({out});
  return y;
}

Tensor Linear::backward(const Tensor& dy, const Cache& c) {
  const int n = c.x.dim(0);
  kern::matmul_tn(c.x.data(), dy.data(), dw.data(), in, n, out, /*accumulate=*/true);
  if (has_bias)
    for (int p = 0; p < n; ++p)
      kern::axpy(1.0, dy.data() + static_cast<size_t>(p) * out, db.data(),
                 static_cast<size_t>(out));
  Tensor dx({n, in});
  kern::matmul_nt(dy.data(), w.data(), dx.data(), n, out, in);
  if (dy.ndim() == 1) dx.reshape_({in});  // mirror a bare-vector input
  return dx;
}

void Linear::params(const std::string& prefix, std::vector<ParamRef>& out_vec) {
  out_vec.push_back({prefix + ".w", &w, &dw});
  if (has_bias) out_vec.push_back({prefix + ".b", &b, &db});
}

// ---------------------------------------------------------------------------
// functional pieces
// ---------------------------------------------------------------------------

Tensor spatial_softmax(const Tensor& x) {
  if (x.ndim() != 3) throw std::invalid_argument("spatial_softmax: need (H,W,K)");
  const int hw = x.dim(0) * x.dim(1), k = x.dim(2);
  Tensor y(x.shape());
  for (int ch = 0; ch < k; ++ch) {
    double m = -1e300;
    for (int p = 0; p < hw; ++p) m = std::max(m, x[static_cast<int64_t>(p) * k + ch]);
    double s = 0.0;
    for (int p = 0; p < hw; ++p) {
      const double e = std::exp(x[static_cast<int64_t>(p) * k + ch] - m);
      y[static_cast<int64_t>(p) * k + ch] = e;
      s += e;
    }
    const double inv = 1.0 / s;
    for (int p = 0; p < hw; ++p) y[static_cast<int64_t>(p) * k + ch] *= inv;
  }
  return y;
}

Tensor spatial_softmax_backward(const Tensor& dy, const Tensor& y) {
  const int hw = y.dim(0) * y.dim(1), k = y.dim(2);
  Tensor dx(y.shape());
  for (int ch = 0; ch < k; ++ch) {
    double dot = 0.0;
    for (int p = 0; p < hw; ++p)
      dot += dy[static_cast<int64_t>(p) * k + ch] * y[static_cast<int64_t>(p) * k + ch];
    for (int p = 0; p < hw; ++p) {
      const int64_t i = static_cast<int64_t>(p) * k + ch;
      dx[i] = y[i] * (dy[i] - dot);
    }
  }
  return dx;
}

std::pair<double, Tensor> softmax_ce(const Tensor& logits, int label) {
  const int n = static_cast<int>(logits.numel());
  if (label < 0 || label >= n)
    throw std::invalid_argument("softmax_ce: label " + std::to_string(label) +
                                " out of range for " + std::to_string(n) + " classes");
  double m = -1e300;
  for (int i = 0; i < n; ++i) m = std::max(m, logits[i]);
  double s = 0.0;
  Tensor p(logits.shape());
  for (int i = 0; i < n; ++i) {
    p[i] = std::exp(logits[i] - m);
    s += p[i];
  }
  const double inv = 1.0 / s;
  for (int i = 0; i < n; ++i) p[i] *= inv;
  const double loss = -std::log(std::max(p[label], 1e-300));
  p[label] -= 1.0;  // p - onehot
  return {loss, std::move(p)};
}

double smooth_l1(const Tensor& pred, const Tensor& target, Tensor* dpred, double beta) {
  if (!pred.same_shape(target))
    throw std::invalid_argument("smooth_l1: shape mismatch " + pred.shape_str() + " vs " +
                                target.shape_str());
  const int64_t n = pred.numel();
  if (dpred) *dpred = Tensor(pred.shape());
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = pred[i] - target[i];
    const double a = std::abs(d);
    if (a < beta) {
      loss += 0.5 * d * d / beta;
      if (dpred) (*dpred)[i] = d / beta / static_cast<double>(n);
    } else {
      loss += a - 0.5 * beta;
      if (dpred) (*dpred)[i] = (d > 0 ? 1.0 : -1.0) / static_cast<double>(n);
    }
  }
  return loss / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Sgd
// ---------------------------------------------------------------------------

void Sgd::step(const std::vector<ParamRef>& params) {
  for (const ParamRef& p : params) {
    Tensor& v = velocity_[p.value];
    if (v.numel() != p.value->numel()) v = Tensor(p.value->shape());
    for (int64_t i = 0; i < p.value->numel(); ++i) {
      const double g = (*p.grad)[i] + weight_decay * (*p.value)[i];
      v[i] = momentum * v[i] + g;
      (*p.value)[i] -= lr * v[i];
    }
  }
}

void Sgd::zero_grads(const std::vector<ParamRef>& params) {
  for (const ParamRef& p : params) p.grad->zero_();
}

double Sgd::clip_grad_norm(const std::vector<ParamRef>& params, double max_norm) {
  double sq = 0.0;
  for (const ParamRef& p : params)
    for (int64_t i = 0; i < p.grad->numel(); ++i) sq += (*p.grad)[i] * (*p.grad)[i];
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (const ParamRef& p : params)
      kern::scal(scale, p.grad->data(), static_cast<size_t>(p.grad->numel()));
  }
  return norm;
}

}  // namespace gspot::nn
