#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gspot/rng.hpp"
#include "gspot/tensor.hpp"

// Hand-written layers over channel-last (H, W, C) tensors. Activations live
// in per-call Cache objects (not in the layer) so one parameter set can run
// several forward passes before the matching backwards — the unsupervised
// stage pushes two branches through the same landmark net. backward()
// accumulates into the layer's grad tensors; Sgd::step consumes them.
namespace gspot::nn {

struct ParamRef {
  std::string name;
  Tensor* value;
  Tensor* grad;
};

class Conv2d {
 public:
  void init(int kh, int kw, int cin, int cout, int stride, int pad, bool bias, Rng& rng);

  struct Cache {
    int hin = 0, win = 0;
    Tensor cols;  // im2col rows, kept for the weight gradient
  };

  Tensor forward(const Tensor& x, Cache& c) const;
  Tensor backward(const Tensor& dy, const Cache& c);
  void params(const std::string& prefix, std::vector<ParamRef>& out);

  int kh = 0, kw = 0, cin = 0, cout = 0, stride = 1, pad = 0;
  bool has_bias = true;
  Tensor w, b;    // w: (kh*kw*cin, cout) in im2col column order
  Tensor dw, db;
};

// Per-channel normalization over the spatial extent of one sample (batch of
// one); running statistics feed eval/frozen mode.
class BatchNorm {
 public:
  void init(int channels);

  struct Cache {
    Tensor xhat;
    std::vector<double> inv_std;
    int hw = 0;
  };

  Tensor forward(const Tensor& x, Cache& c);
  Tensor backward(const Tensor& dy, const Cache& c);
  void params(const std::string& prefix, std::vector<ParamRef>& out);

  int c = 0;
  double eps = 1e-5;
  double momentum = 0.1;
  bool use_batch_stats = true;  // false: read running stats (eval / frozen stage)
  Tensor gamma, beta, running_mean, running_var;
  Tensor dgamma, dbeta;
};

struct Relu {
  struct Cache {
    Tensor y;
  };
  static Tensor forward(const Tensor& x, Cache& c);
  static Tensor backward(const Tensor& dy, const Cache& c);
};

class Linear {
 public:
  void init(int in_dim, int out_dim, bool bias, Rng& rng);

  struct Cache {
    Tensor x;  // flattened to (N, in)
  };

  Tensor forward(const Tensor& x, Cache& c) const;  // x: (in) or (N, in)
  Tensor backward(const Tensor& dy, const Cache& c);
  void params(const std::string& prefix, std::vector<ParamRef>& out);

  int in = 0, out = 0;
  bool has_bias = true;
  Tensor w, b;  // w: (in, out)
  Tensor dw, db;
};

// Softmax over the spatial positions of each channel of an (H, W, K) map.
Tensor spatial_softmax(const Tensor& x);
Tensor spatial_softmax_backward(const Tensor& dy, const Tensor& y);

// Cross-entropy on raw logits; returns (loss, dlogits).
std::pair<double, Tensor> softmax_ce(const Tensor& logits, int label);

// Mean smooth-L1 over coordinates; transition point beta (0.5*d^2/beta inside,
// |d| - 0.5*beta outside). Gradient w.r.t. pred written to *dpred when given.
double smooth_l1(const Tensor& pred, const Tensor& target, Tensor* dpred, double beta = 1.0);

class Sgd {
 public:
  Sgd(double lr, double momentum = 0.9, double weight_decay = 1e-4)
      : lr(lr), momentum(momentum), weight_decay(weight_decay) {}

  void step(const std::vector<ParamRef>& params);
  static void zero_grads(const std::vector<ParamRef>& params);
  // Global-norm clip over the group; returns the pre-clip norm. max_norm <= 0
  // disables. Guards the cubic-interaction fusion block during finetuning.
  static double clip_grad_norm(const std::vector<ParamRef>& params, double max_norm);

  double lr;
  double momentum;
  double weight_decay;

 private:
  std::unordered_map<Tensor*, Tensor> velocity_;
};

}  // namespace gspot::nn
