#include "gspot/spotter.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "gspot/kernels.hpp"

namespace gspot::spotter {

const char* fusion_name(Fusion f) {
  switch (f) {
    case Fusion::Off: return "off";
    case Fusion::Graph: return "graph";
    case Fusion::Concat: return "concatenation";
    case Fusion::Sum: return "summation";
  }
  throw std::logic_error("fusion_name: bad enum");
}

Fusion fusion_from_name(const std::string& name) {
  if (name == "off") return Fusion::Off;
  if (name == "graph") return Fusion::Graph;
  if (name == "concatenation" || name == "concat") return Fusion::Concat;
  if (name == "summation" || name == "sum") return Fusion::Sum;
  throw std::invalid_argument("unknown fusion mode: " + name);
}

Tensor image_tensor(const Image& img) {
  if (img.width <= 0 || img.height <= 0) throw std::invalid_argument("image_tensor: empty image");
  Tensor t({img.height, img.width, 1});
  double* p = t.data();
  for (size_t i = 0; i < img.px.size(); ++i) p[i] = img.px[i] / 255.0;
  return t;
}

// ---------------------------------------------------------------------------
// backbone
// ---------------------------------------------------------------------------

void Backbone::init(int c1, int c2, int d, Rng& rng) {
  if (c1 < 1 || c2 < 1 || d < 1) throw std::invalid_argument("Backbone::init: bad widths");
  d_out = d;
  conv1.init(3, 3, 1, c1, 2, 1, false, rng);
  conv2.init(3, 3, c1, c2, 2, 1, false, rng);
  conv3.init(3, 3, c2, c2, 1, 1, false, rng);
  conv4.init(3, 3, c2, d, 1, 1, false, rng);
  bn1.init(c1);
  bn2.init(c2);
  bn3.init(c2);
  bn4.init(d);
}

Tensor Backbone::forward(const Tensor& image, Cache& c) {
  if (image.ndim() != 3 || image.dim(2) != 1)
    throw std::invalid_argument("Backbone::forward: expected (H,W,1), got " + image.shape_str());
  Tensor y = nn::Relu::forward(bn1.forward(conv1.forward(image, c.c1), c.b1), c.r1);
  y = nn::Relu::forward(bn2.forward(conv2.forward(y, c.c2), c.b2), c.r2);
  y = nn::Relu::forward(bn3.forward(conv3.forward(y, c.c3), c.b3), c.r3);
  y = nn::Relu::forward(bn4.forward(conv4.forward(y, c.c4), c.b4), c.r4);
  return y;
}

Tensor Backbone::backward(const Tensor& dy, Cache& c) {
  Tensor g = conv4.backward(bn4.backward(nn::Relu::backward(dy, c.r4), c.b4), c.c4);
  g = conv3.backward(bn3.backward(nn::Relu::backward(g, c.r3), c.b3), c.c3);
  g = conv2.backward(bn2.backward(nn::Relu::backward(g, c.r2), c.b2), c.c2);
  g = conv1.backward(bn1.backward(nn::Relu::backward(g, c.r1), c.b1), c.c1);
  return g;
}

std::vector<nn::ParamRef> Backbone::params(const std::string& prefix) {
  std::vector<nn::ParamRef> out;
  conv1.params(prefix + ".conv1", out);
  bn1.params(prefix + ".bn1", out);
  conv2.params(prefix + ".conv2", out);
  bn2.params(prefix + ".bn2", out);
  conv3.params(prefix + ".conv3", out);
  bn3.params(prefix + ".bn3", out);
  conv4.params(prefix + ".conv4", out);
  bn4.params(prefix + ".bn4", out);
  return out;
}

std::vector<nn::ParamRef> Backbone::norm_state(const std::string& prefix) {
  std::vector<nn::ParamRef> out;
  const std::pair<const char*, nn::BatchNorm*> bns[] = {
      {".bn1", &bn1}, {".bn2", &bn2}, {".bn3", &bn3}, {".bn4", &bn4}};
  for (const auto& [suffix, bn] : bns) {
    out.push_back({prefix + suffix + ".running_mean", &bn->running_mean, nullptr});
    out.push_back({prefix + suffix + ".running_var", &bn->running_var, nullptr});
  }
  return out;
}

void Backbone::set_eval(bool eval) {
  bn1.use_batch_stats = !eval;
  bn2.use_batch_stats = !eval;
  bn3.use_batch_stats = !eval;
  bn4.use_batch_stats = !eval;
}

// ---------------------------------------------------------------------------
// RoI pooling
// ---------------------------------------------------------------------------

namespace {

constexpr double kRoiSnap = 1e-9;

struct RoiCell {
  int y0, x0;          // low corner of the bilinear footprint
  int y1, x1;          // high corner (may equal the low one at the border)
  double w00, w01, w10, w11;
};

void roi_axis(double f, int n, int* i0, int* i1, double* t) {
  if (f <= 0.0) {
    *i0 = *i1 = 0;
    *t = 0.0;
    return;
  }
  if (f >= n - 1) {
    *i0 = *i1 = n - 1;
    *t = 0.0;
    return;
  }
  double fl = std::floor(f);
  *i0 = static_cast<int>(fl);
  *i1 = *i0 + 1;
  *t = f - fl;
}

// Shared sampling geometry of forward and backward. Cell (i,j) reads the
// bilinear interpolation of the quad point at edge fractions
// ((j+0.5)/out, (i+0.5)/out); integer-aligned reads are snapped so an
// axis-aligned cell-sized box is an exact copy.
std::vector<RoiCell> roi_cells(const Tensor& features, const Quad& box_pixels, int out_size,
                               int stride) {
  if (features.ndim() != 3)
    throw std::invalid_argument("extract_roi: features must be (H,W,D), got " +
                                features.shape_str());
  if (out_size < 1) throw std::invalid_argument("extract_roi: out_size must be positive");
  if (stride < 1) throw std::invalid_argument("extract_roi: stride must be positive");
  if (quad_area(box_pixels) <= 0.0)
    throw std::invalid_argument("extract_roi: box has non-positive area");

  const int h = static_cast<int>(features.dim(0));
  const int w = static_cast<int>(features.dim(1));
  Vec2 p0 = {box_pixels.p[0].x / stride, box_pixels.p[0].y / stride};
  Vec2 p1 = {box_pixels.p[1].x / stride, box_pixels.p[1].y / stride};
  Vec2 p2 = {box_pixels.p[2].x / stride, box_pixels.p[2].y / stride};
  Vec2 p3 = {box_pixels.p[3].x / stride, box_pixels.p[3].y / stride};
  const double bx0 = std::min({p0.x, p1.x, p2.x, p3.x});
  const double bx1 = std::max({p0.x, p1.x, p2.x, p3.x});
  const double by0 = std::min({p0.y, p1.y, p2.y, p3.y});
  const double by1 = std::max({p0.y, p1.y, p2.y, p3.y});
  if (bx1 <= 0.0 || bx0 >= w || by1 <= 0.0 || by0 >= h)
    throw std::invalid_argument("extract_roi: box lies fully outside the feature extent");

  std::vector<RoiCell> cells(static_cast<size_t>(out_size) * out_size);
  for (int i = 0; i < out_size; ++i) {
    const double v = (i + 0.5) / out_size;
    for (int j = 0; j < out_size; ++j) {
      const double u = (j + 0.5) / out_size;
      const double a = (1 - u) * (1 - v), b = u * (1 - v), c = u * v, d = (1 - u) * v;
      double fx = a * p0.x + b * p1.x + c * p2.x + d * p3.x - 0.5;
      double fy = a * p0.y + b * p1.y + c * p2.y + d * p3.y - 0.5;
      if (std::abs(fx - std::round(fx)) < kRoiSnap) fx = std::round(fx);
      if (std::abs(fy - std::round(fy)) < kRoiSnap) fy = std::round(fy);
      RoiCell cell;
      double tx, ty;
      roi_axis(fx, w, &cell.x0, &cell.x1, &tx);
      roi_axis(fy, h, &cell.y0, &cell.y1, &ty);
      cell.w00 = (1 - tx) * (1 - ty);
      cell.w01 = tx * (1 - ty);
      cell.w10 = (1 - tx) * ty;
      cell.w11 = tx * ty;
      cells[static_cast<size_t>(i) * out_size + j] = cell;
    }
  }
  return cells;
}

}  // namespace

Tensor extract_roi(const Tensor& features, const Quad& box_pixels, int out_size, int stride) {
  const auto cells = roi_cells(features, box_pixels, out_size, stride);
  const int w = static_cast<int>(features.dim(1));
  const int d = static_cast<int>(features.dim(2));
  Tensor out({out_size, out_size, d});
  const double* src = features.data();
  double* dst = out.data();
  for (size_t n = 0; n < cells.size(); ++n) {
    const RoiCell& cl = cells[n];
    const double* s00 = src + (static_cast<size_t>(cl.y0) * w + cl.x0) * d;
    const double* s01 = src + (static_cast<size_t>(cl.y0) * w + cl.x1) * d;
    const double* s10 = src + (static_cast<size_t>(cl.y1) * w + cl.x0) * d;
    const double* s11 = src + (static_cast<size_t>(cl.y1) * w + cl.x1) * d;
    double* o = dst + n * d;
    for (int c = 0; c < d; ++c)
      o[c] = cl.w00 * s00[c] + cl.w01 * s01[c] + cl.w10 * s10[c] + cl.w11 * s11[c];
  }
  return out;
}

void extract_roi_backward(const Tensor& features, const Quad& box_pixels, int out_size,
                          int stride, const Tensor& dpatch, Tensor* dfeatures) {
  if (!dfeatures) return;
  if (!dfeatures->same_shape(features))
    throw std::invalid_argument("extract_roi_backward: dfeatures shape mismatch");
  const int d = static_cast<int>(features.dim(2));
  if (dpatch.ndim() != 3 || dpatch.dim(0) != out_size || dpatch.dim(1) != out_size ||
      dpatch.dim(2) != d)
    throw std::invalid_argument("extract_roi_backward: dpatch shape mismatch");
  const auto cells = roi_cells(features, box_pixels, out_size, stride);
  const int w = static_cast<int>(features.dim(1));
  const double* g = dpatch.data();
  double* dst = dfeatures->data();
  for (size_t n = 0; n < cells.size(); ++n) {
    const RoiCell& cl = cells[n];
    double* d00 = dst + (static_cast<size_t>(cl.y0) * w + cl.x0) * d;
    double* d01 = dst + (static_cast<size_t>(cl.y0) * w + cl.x1) * d;
    double* d10 = dst + (static_cast<size_t>(cl.y1) * w + cl.x0) * d;
    double* d11 = dst + (static_cast<size_t>(cl.y1) * w + cl.x1) * d;
    const double* gi = g + n * d;
    for (int c = 0; c < d; ++c) {
      d00[c] += cl.w00 * gi[c];
      d01[c] += cl.w01 * gi[c];
      d10[c] += cl.w10 * gi[c];
      d11[c] += cl.w11 * gi[c];
    }
  }
}

// ---------------------------------------------------------------------------
// box regression
// ---------------------------------------------------------------------------

Tensor box_deltas(const Quad& proposal, const Quad& target) {
  const double pw = proposal.width(), ph = proposal.height();
  const double tw = target.width(), th = target.height();
  if (pw <= 0 || ph <= 0) throw std::invalid_argument("box_deltas: degenerate proposal");
  if (tw <= 0 || th <= 0) throw std::invalid_argument("box_deltas: degenerate target");
  const double pcx = 0.5 * (proposal.min_x() + proposal.max_x());
  const double pcy = 0.5 * (proposal.min_y() + proposal.max_y());
  const double tcx = 0.5 * (target.min_x() + target.max_x());
  const double tcy = 0.5 * (target.min_y() + target.max_y());
  Tensor d({4});
  d[0] = (tcx - pcx) / pw;
  d[1] = (tcy - pcy) / ph;
  d[2] = std::log(tw / pw);
  d[3] = std::log(th / ph);
  return d;
}

Quad apply_deltas(const Quad& proposal, const Tensor& deltas) {
  if (deltas.numel() != 4) throw std::invalid_argument("apply_deltas: need 4 deltas");
  const double pw = proposal.width(), ph = proposal.height();
  if (pw <= 0 || ph <= 0) throw std::invalid_argument("apply_deltas: degenerate proposal");
  const double cx = 0.5 * (proposal.min_x() + proposal.max_x()) + deltas[0] * pw;
  const double cy = 0.5 * (proposal.min_y() + proposal.max_y()) + deltas[1] * ph;
  const double w = pw * std::exp(deltas[2]);
  const double h = ph * std::exp(deltas[3]);
  return Quad::axis_aligned(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h);
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

int Spotter::fused_dim() const {
  const int grid = cfg.roi_char * cfg.roi_char * cfg.d;
  return cfg.fusion == Fusion::Concat ? 2 * grid : grid;
}

void Spotter::init(const SpotterConfig& config, Rng& rng) {
  cfg = config;
  if (cfg.alphabet_size < 1 || cfg.alphabet_size > glyphgen::max_alphabet_size())
    throw std::invalid_argument("Spotter::init: bad alphabet size");
  if (cfg.k_landmarks < 1) throw std::invalid_argument("Spotter::init: bad landmark count");
  if (cfg.roi_char < 1) throw std::invalid_argument("Spotter::init: bad roi_char");
  if (cfg.roi_gpm < 2 || cfg.roi_gpm % 2 != 0)
    throw std::invalid_argument("Spotter::init: roi_gpm must be even and >= 2");
  backbone.init(cfg.c1, cfg.c2, cfg.d, rng);
  const int gw = cfg.gpm_width > 0 ? cfg.gpm_width : cfg.d;
  gpm_net.init(cfg.d, gw, cfg.k_landmarks, rng);
  if (cfg.fusion == Fusion::Graph)
    grm_mod.init(cfg.roi_char * cfg.roi_char, cfg.k_landmarks, cfg.d, rng);
  crb_fc1.init(fused_dim(), cfg.crb_hidden, true, rng);
  crb_cls.init(cfg.crb_hidden, cfg.alphabet_size + 1, true, rng);
  crb_box.init(cfg.crb_hidden, 4, true, rng);
  tdb_fc1.init(cfg.roi_char * cfg.roi_char * cfg.d, cfg.tdb_hidden, true, rng);
  tdb_cls.init(cfg.tdb_hidden, 2, true, rng);
  tdb_box.init(cfg.tdb_hidden, 4, true, rng);
  eval_ = false;
  gpm_frozen_ = false;
  apply_modes();
}

std::pair<Tensor, Tensor> Spotter::recognize_character(const Tensor& features, const Quad& box,
                                                       CharCache& cache) {
  cache.box_pixels = box;
  cache.fc = extract_roi(features, box, cfg.roi_char, Backbone::kStride);
  if (!fusion_active_ && cfg.fusion == Fusion::Concat) {
    // landmark half zero-filled: same head shapes, no landmark contribution
    const int s = cfg.roi_char, d = cfg.d;
    cache.fused = Tensor({s, s, 2 * d});
    double* p = cache.fused.data();
    const double* q = cache.fc.data();
    for (int n = 0; n < s * s; ++n)
      for (int c = 0; c < d; ++c) p[static_cast<size_t>(n) * 2 * d + c] = q[static_cast<size_t>(n) * d + c];
  } else if (!fusion_active_ || cfg.fusion == Fusion::Off) {
    cache.fused = cache.fc;
  } else {
    cache.hp = extract_roi(features, box, cfg.roi_gpm, Backbone::kStride);
    cache.maps = gpm_net.forward(cache.hp, cache.gpm);
    cache.coords = gpm::soft_argmax(cache.maps);
    cache.hk = gpm::extract_landmark_features(cache.hp, cache.coords);
    if (cfg.fusion == Fusion::Graph) {
      cache.fused = grm_mod.forward(cache.fc, cache.hk, cache.grm);
    } else {
      const int s = cfg.roi_char, d = cfg.d, k = cfg.k_landmarks;
      std::vector<double> mean(static_cast<size_t>(d), 0.0);
      for (int r = 0; r < k; ++r)
        for (int c = 0; c < d; ++c) mean[static_cast<size_t>(c)] += cache.hk.at(r, c) / k;
      if (cfg.fusion == Fusion::Sum) {
        cache.fused = cache.fc;
        double* p = cache.fused.data();
        for (int n = 0; n < s * s; ++n)
          for (int c = 0; c < d; ++c) p[static_cast<size_t>(n) * d + c] += mean[static_cast<size_t>(c)];
      } else {  // Concat
        cache.fused = Tensor({s, s, 2 * d});
        double* p = cache.fused.data();
        const double* q = cache.fc.data();
        for (int n = 0; n < s * s; ++n) {
          for (int c = 0; c < d; ++c) p[static_cast<size_t>(n) * 2 * d + c] = q[static_cast<size_t>(n) * d + c];
          for (int c = 0; c < d; ++c) p[static_cast<size_t>(n) * 2 * d + d + c] = mean[static_cast<size_t>(c)];
        }
      }
    }
  }
  Tensor flat = cache.fused.reshaped({static_cast<int>(cache.fused.numel())});
  cache.hidden = nn::Relu::forward(crb_fc1.forward(flat, cache.fc1), cache.relu);
  Tensor logits = crb_cls.forward(cache.hidden, cache.cls);
  Tensor deltas = crb_box.forward(cache.hidden, cache.box);
  return {std::move(logits), std::move(deltas)};
}

void Spotter::recognize_character_backward(const Tensor& features, const Tensor& dlogits,
                                           const Tensor& ddeltas, const CharCache& cache,
                                           Tensor* dfeatures) {
  Tensor dhidden = crb_cls.backward(dlogits, cache.cls);
  if (ddeltas.numel() > 0) {
    Tensor db = crb_box.backward(ddeltas, cache.box);
    kern::axpy(1.0, db.data(), dhidden.data(), static_cast<size_t>(dhidden.numel()));
  }
  Tensor dflat = crb_fc1.backward(nn::Relu::backward(dhidden, cache.relu), cache.fc1);
  Tensor dfused = dflat.reshaped(cache.fused.shape());

  const int s = cfg.roi_char, d = cfg.d, k = cfg.k_landmarks;
  Tensor dfc, dhk;
  if (!fusion_active_) {
    if (cfg.fusion == Fusion::Concat) {
      dfc = Tensor({s, s, d});
      const double* g = dfused.data();
      double* f = dfc.data();
      for (int n = 0; n < s * s; ++n)
        for (int c = 0; c < d; ++c) f[static_cast<size_t>(n) * d + c] = g[static_cast<size_t>(n) * 2 * d + c];
    } else {
      dfc = std::move(dfused);
    }
    extract_roi_backward(features, cache.box_pixels, cfg.roi_char, Backbone::kStride, dfc,
                         dfeatures);
    return;
  }
  switch (cfg.fusion) {
    case Fusion::Off:
      dfc = std::move(dfused);
      break;
    case Fusion::Graph:
      grm_mod.backward(dfused, cache.grm, &dfc, &dhk);
      break;
    case Fusion::Sum: {
      dfc = dfused;
      dhk = Tensor({k, d});
      const double* g = dfused.data();
      for (int c = 0; c < d; ++c) {
        double acc = 0.0;
        for (int n = 0; n < s * s; ++n) acc += g[static_cast<size_t>(n) * d + c];
        for (int r = 0; r < k; ++r) dhk.at(r, c) = acc / k;
      }
      break;
    }
    case Fusion::Concat: {
      dfc = Tensor({s, s, d});
      dhk = Tensor({k, d});
      const double* g = dfused.data();
      double* f = dfc.data();
      for (int n = 0; n < s * s; ++n)
        for (int c = 0; c < d; ++c) f[static_cast<size_t>(n) * d + c] = g[static_cast<size_t>(n) * 2 * d + c];
      for (int c = 0; c < d; ++c) {
        double acc = 0.0;
        for (int n = 0; n < s * s; ++n) acc += g[static_cast<size_t>(n) * 2 * d + d + c];
        for (int r = 0; r < k; ++r) dhk.at(r, c) = acc / k;
      }
      break;
    }
  }

  if (cfg.fusion != Fusion::Off) {
    Tensor dhp(cache.hp.shape());
    std::vector<Vec2> dcoords;
    gpm::extract_landmark_features_backward(cache.hp, cache.coords, dhk, &dhp, &dcoords);
    Tensor dmaps = gpm::soft_argmax_backward(cache.maps, dcoords);
    Tensor dhp2 = gpm_net.backward(dmaps, cache.gpm);
    kern::axpy(1.0, dhp2.data(), dhp.data(), static_cast<size_t>(dhp.numel()));
    extract_roi_backward(features, cache.box_pixels, cfg.roi_gpm, Backbone::kStride, dhp,
                         dfeatures);
  }
  extract_roi_backward(features, cache.box_pixels, cfg.roi_char, Backbone::kStride, dfc,
                       dfeatures);
}

std::pair<Tensor, Tensor> Spotter::classify_line(const Tensor& features, const Quad& box,
                                                 LineCache& cache) {
  cache.box_pixels = box;
  cache.ft = extract_roi(features, box, cfg.roi_char, Backbone::kStride);
  Tensor flat = cache.ft.reshaped({static_cast<int>(cache.ft.numel())});
  cache.hidden = nn::Relu::forward(tdb_fc1.forward(flat, cache.fc1), cache.relu);
  Tensor logits = tdb_cls.forward(cache.hidden, cache.cls);
  Tensor deltas = tdb_box.forward(cache.hidden, cache.box);
  return {std::move(logits), std::move(deltas)};
}

void Spotter::classify_line_backward(const Tensor& features, const Tensor& dlogits,
                                     const Tensor& ddeltas, const LineCache& cache,
                                     Tensor* dfeatures) {
  Tensor dhidden = tdb_cls.backward(dlogits, cache.cls);
  if (ddeltas.numel() > 0) {
    Tensor db = tdb_box.backward(ddeltas, cache.box);
    kern::axpy(1.0, db.data(), dhidden.data(), static_cast<size_t>(dhidden.numel()));
  }
  Tensor dflat = tdb_fc1.backward(nn::Relu::backward(dhidden, cache.relu), cache.fc1);
  Tensor dft = dflat.reshaped(cache.ft.shape());
  extract_roi_backward(features, cache.box_pixels, cfg.roi_char, Backbone::kStride, dft,
                       dfeatures);
}

std::vector<nn::ParamRef> Spotter::params() {
  std::vector<nn::ParamRef> out = backbone_params();
  if (cfg.fusion != Fusion::Off) {
    auto g = gpm_params();
    out.insert(out.end(), g.begin(), g.end());
  }
  if (cfg.fusion == Fusion::Graph) {
    auto g = grm_params();
    out.insert(out.end(), g.begin(), g.end());
  }
  auto c = crb_params();
  out.insert(out.end(), c.begin(), c.end());
  auto t = tdb_params();
  out.insert(out.end(), t.begin(), t.end());
  return out;
}

std::vector<nn::ParamRef> Spotter::backbone_params() { return backbone.params("backbone"); }
std::vector<nn::ParamRef> Spotter::gpm_params() { return gpm_net.params("gpm"); }

std::vector<nn::ParamRef> Spotter::grm_params() {
  if (cfg.fusion != Fusion::Graph) return {};
  return grm_mod.params("fusion");
}

std::vector<nn::ParamRef> Spotter::crb_params() {
  std::vector<nn::ParamRef> out;
  crb_fc1.params("crb.fc1", out);
  crb_cls.params("crb.cls", out);
  crb_box.params("crb.box", out);
  return out;
}

std::vector<nn::ParamRef> Spotter::tdb_params() {
  std::vector<nn::ParamRef> out;
  tdb_fc1.params("tdb.fc1", out);
  tdb_cls.params("tdb.cls", out);
  tdb_box.params("tdb.box", out);
  return out;
}

std::vector<nn::ParamRef> Spotter::cls_layer_params() {
  std::vector<nn::ParamRef> out;
  crb_cls.params("crb.cls", out);
  return out;
}

void Spotter::apply_modes() {
  backbone.set_eval(eval_);
  gpm_net.set_frozen(eval_ || gpm_frozen_);
}

void Spotter::set_fusion_active(bool active) { fusion_active_ = active; }

std::vector<nn::ParamRef> Spotter::norm_state() {
  std::vector<nn::ParamRef> out = backbone.norm_state("backbone");
  if (cfg.fusion != Fusion::Off) {
    auto g = gpm_net.norm_state("gpm");
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

void Spotter::set_eval(bool eval) {
  eval_ = eval;
  apply_modes();
}

void Spotter::set_gpm_frozen(bool frozen) {
  gpm_frozen_ = frozen;
  apply_modes();
}

void Spotter::reinit_cls_layer(Rng& rng) {
  crb_cls.init(cfg.crb_hidden, cfg.alphabet_size + 1, true, rng);
}

// ---------------------------------------------------------------------------
// assembly
// ---------------------------------------------------------------------------

std::vector<SpotPrediction> assemble_text(const std::vector<CharDetection>& char_dets,
                                          const std::vector<Proposal>& text_boxes,
                                          double iou_threshold) {
  std::vector<SpotPrediction> out(text_boxes.size());
  for (size_t li = 0; li < text_boxes.size(); ++li) out[li].text_box = text_boxes[li].box;
  for (const CharDetection& det : char_dets) {
    int best = -1;
    double best_iou = iou_threshold;
    for (size_t li = 0; li < text_boxes.size(); ++li) {
      const double iou = quad_iou(det.box, text_boxes[li].box);
      if (iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(li);
      }
    }
    if (best >= 0) out[static_cast<size_t>(best)].char_dets.push_back(det);
  }
  for (SpotPrediction& pred : out) {
    const bool horizontal = pred.text_box.width() >= pred.text_box.height();
    std::stable_sort(pred.char_dets.begin(), pred.char_dets.end(),
                     [horizontal](const CharDetection& a, const CharDetection& b) {
                       const double ka = horizontal ? 0.5 * (a.box.min_x() + a.box.max_x())
                                                    : 0.5 * (a.box.min_y() + a.box.max_y());
                       const double kb = horizontal ? 0.5 * (b.box.min_x() + b.box.max_x())
                                                    : 0.5 * (b.box.min_y() + b.box.max_y());
                       return ka < kb;
                     });
    for (const CharDetection& d : pred.char_dets)
      pred.text += glyphgen::class_symbol(d.class_id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

namespace {

void loss_branch(const std::vector<LossItem>& items, double* cls_term, double* box_term,
                 std::vector<Tensor>* dlogits_out, std::vector<Tensor>* ddeltas_out) {
  const size_t n = items.size();
  size_t n_box = 0;
  for (const LossItem& it : items)
    if (it.deltas.numel() > 0) ++n_box;
  for (const LossItem& it : items) {
    if (it.label < 0 || it.label >= static_cast<int>(it.logits.numel()))
      throw std::invalid_argument("spotting_loss: label out of range");
    auto [l, dl] = nn::softmax_ce(it.logits, it.label);
    *cls_term += l / static_cast<double>(n);
    if (dlogits_out) {
      kern::scal(1.0 / static_cast<double>(n), dl.data(), static_cast<size_t>(dl.numel()));
      dlogits_out->push_back(std::move(dl));
    }
    if (it.deltas.numel() > 0) {
      if (it.deltas.numel() != 4 || it.targets.numel() != 4)
        throw std::invalid_argument("spotting_loss: box items need 4 deltas and 4 targets");
      Tensor dp;
      const double lb = nn::smooth_l1(it.deltas, it.targets, ddeltas_out ? &dp : nullptr);
      *box_term += lb / static_cast<double>(n_box);
      if (ddeltas_out) {
        kern::scal(1.0 / static_cast<double>(n_box), dp.data(), static_cast<size_t>(dp.numel()));
        ddeltas_out->push_back(std::move(dp));
      }
    } else if (ddeltas_out) {
      ddeltas_out->emplace_back();
    }
  }
}

}  // namespace

LossReport spotting_loss(const std::vector<LossItem>& crb_items,
                         const std::vector<LossItem>& tdb_items, LossGrads* grads) {
  LossReport rep;
  loss_branch(crb_items, &rep.crb_cls, &rep.crb_box, grads ? &grads->crb_dlogits : nullptr,
              grads ? &grads->crb_ddeltas : nullptr);
  loss_branch(tdb_items, &rep.tdb_cls, &rep.tdb_box, grads ? &grads->tdb_dlogits : nullptr,
              grads ? &grads->tdb_ddeltas : nullptr);
  rep.total = rep.crb_cls + rep.crb_box + rep.tdb_cls + rep.tdb_box + rep.rpn;
  return rep;
}

// ---------------------------------------------------------------------------
// proposals
// ---------------------------------------------------------------------------

Quad jitter_box(const Quad& box, double frac, Rng& rng) {
  if (frac < 0.0) throw std::invalid_argument("jitter_box: negative jitter fraction");
  const double w = box.width(), h = box.height();
  const double cx = 0.5 * (box.min_x() + box.max_x());
  const double cy = 0.5 * (box.min_y() + box.max_y());
  const double sx = 1.0 + rng.uniform(-frac, frac);
  const double sy = 1.0 + rng.uniform(-frac, frac);
  const double dx = rng.uniform(-frac, frac) * w;
  const double dy = rng.uniform(-frac, frac) * h;
  const double nw = w * sx, nh = h * sy;
  return Quad::axis_aligned(cx + dx - 0.5 * nw, cy + dy - 0.5 * nh, cx + dx + 0.5 * nw,
                            cy + dy + 0.5 * nh);
}

namespace {

// Same-size crop placed uniformly at random, keeping the attempt with the
// least overlap against all avoid boxes; stops early once below max_iou.
Quad off_box(double bw, double bh, int image_w, int image_h, const std::vector<Quad>& avoid,
             double max_iou, Rng& rng) {
  Quad best{};
  double best_iou = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt < 40; ++attempt) {
    const double x0 = rng.uniform(0.0, std::max(0.0, image_w - bw));
    const double y0 = rng.uniform(0.0, std::max(0.0, image_h - bh));
    const Quad cand = Quad::axis_aligned(x0, y0, x0 + bw, y0 + bh);
    double m = 0.0;
    for (const Quad& q : avoid) m = std::max(m, quad_iou(cand, q));
    if (m < best_iou) {
      best_iou = m;
      best = cand;
    }
    if (best_iou < max_iou) break;
  }
  return best;
}

}  // namespace

std::vector<CharProposal> make_char_proposals(const std::vector<glyphgen::CharAnn>& chars,
                                              int image_w, int image_h, double frac, Rng& rng) {
  std::vector<Quad> avoid;
  avoid.reserve(chars.size());
  for (const auto& ca : chars) avoid.push_back(ca.points);
  std::vector<CharProposal> out;
  out.reserve(chars.size() * 2);
  for (size_t gi = 0; gi < chars.size(); ++gi) {
    const Quad& gt = chars[gi].points;
    CharProposal pos;
    pos.p = {jitter_box(gt, frac, rng), ProposalKind::Character,
             ProposalSource::GroundTruthJittered};
    pos.gt_index = static_cast<int>(gi);
    out.push_back(pos);
    CharProposal neg;
    neg.p = {off_box(gt.width(), gt.height(), image_w, image_h, avoid, 0.1, rng),
             ProposalKind::Character, ProposalSource::GroundTruthJittered};
    out.push_back(neg);
  }
  return out;
}

std::vector<CharProposal> make_char_proposals(const glyphgen::GlyphSample& sample, double frac,
                                              Rng& rng) {
  return make_char_proposals(sample.chars, sample.image.width, sample.image.height, frac, rng);
}

std::vector<LineProposal> make_line_proposals(const std::vector<glyphgen::TextLineAnn>& lines,
                                              int image_w, int image_h, double frac, Rng& rng) {
  std::vector<Quad> avoid;
  avoid.reserve(lines.size());
  for (const auto& ln : lines) avoid.push_back(ln.points);
  std::vector<LineProposal> out;
  for (size_t gi = 0; gi < lines.size(); ++gi) {
    if (lines[gi].ignore) continue;  // still avoided by the negatives
    const Quad& gt = lines[gi].points;
    LineProposal pos;
    pos.p = {jitter_box(gt, frac, rng), ProposalKind::TextLine,
             ProposalSource::GroundTruthJittered};
    pos.gt_index = static_cast<int>(gi);
    out.push_back(pos);
    LineProposal neg;
    neg.p = {off_box(gt.width(), gt.height(), image_w, image_h, avoid, 0.1, rng),
             ProposalKind::TextLine, ProposalSource::GroundTruthJittered};
    out.push_back(neg);
  }
  return out;
}

std::vector<Proposal> cc_char_proposals(const Image& img, int threshold, int min_area) {
  const int w = img.width, h = img.height;
  std::vector<char> seen(static_cast<size_t>(w) * h, 0);
  std::vector<Proposal> out;
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t idx = static_cast<size_t>(y) * w + x;
      if (seen[idx] || img.px[idx] < threshold) continue;
      int minx = x, maxx = x, miny = y, maxy = y, area = 0;
      seen[idx] = 1;
      queue.emplace_back(y, x);
      while (!queue.empty()) {
        auto [cy, cx] = queue.front();
        queue.pop_front();
        ++area;
        minx = std::min(minx, cx);
        maxx = std::max(maxx, cx);
        miny = std::min(miny, cy);
        maxy = std::max(maxy, cy);
        const int ny[4] = {cy - 1, cy + 1, cy, cy};
        const int nx[4] = {cx, cx, cx - 1, cx + 1};
        for (int t = 0; t < 4; ++t) {
          if (ny[t] < 0 || ny[t] >= h || nx[t] < 0 || nx[t] >= w) continue;
          const size_t ni = static_cast<size_t>(ny[t]) * w + nx[t];
          if (seen[ni] || img.px[ni] < threshold) continue;
          seen[ni] = 1;
          queue.emplace_back(ny[t], nx[t]);
        }
      }
      if (area < min_area) continue;
      out.push_back({Quad::axis_aligned(minx, miny, maxx + 1, maxy + 1),
                     ProposalKind::Character, ProposalSource::External});
    }
  }
  return out;
}

std::vector<Proposal> cc_line_proposals(const std::vector<Proposal>& char_proposals,
                                        int gap_px) {
  std::vector<size_t> order(char_proposals.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return char_proposals[a].box.min_x() < char_proposals[b].box.min_x();
  });
  struct Cluster {
    double x0, y0, x1, y1;
  };
  std::vector<Cluster> clusters;
  for (size_t oi : order) {
    const Quad& b = char_proposals[oi].box;
    bool placed = false;
    for (Cluster& cl : clusters) {
      const double overlap = std::min(b.max_y(), cl.y1) - std::max(b.min_y(), cl.y0);
      const double min_h = std::min(b.height(), cl.y1 - cl.y0);
      if (overlap >= 0.3 * min_h && b.min_x() - cl.x1 <= gap_px) {
        cl.x0 = std::min(cl.x0, b.min_x());
        cl.y0 = std::min(cl.y0, b.min_y());
        cl.x1 = std::max(cl.x1, b.max_x());
        cl.y1 = std::max(cl.y1, b.max_y());
        placed = true;
        break;
      }
    }
    if (!placed) clusters.push_back({b.min_x(), b.min_y(), b.max_x(), b.max_y()});
  }
  std::vector<Proposal> out;
  out.reserve(clusters.size());
  for (const Cluster& cl : clusters)
    out.push_back({Quad::axis_aligned(cl.x0, cl.y0, cl.x1, cl.y1), ProposalKind::TextLine,
                   ProposalSource::External});
  return out;
}

// ---------------------------------------------------------------------------
// inference
// ---------------------------------------------------------------------------

namespace {

// numerically stable softmax posterior of one class
double class_posterior(const Tensor& logits, int cls) {
  double mx = logits[0];
  for (int64_t i = 1; i < logits.numel(); ++i) mx = std::max(mx, logits[i]);
  double z = 0.0;
  for (int64_t i = 0; i < logits.numel(); ++i) z += std::exp(logits[i] - mx);
  return std::exp(logits[cls] - mx) / z;
}

}  // namespace

std::vector<SpotPrediction> spot_image(Spotter& model, const Tensor& image,
                                       const std::vector<Proposal>& line_proposals,
                                       const std::vector<Proposal>& char_proposals) {
  const bool was_eval = model.is_eval();
  model.set_eval(true);
  Backbone::Cache bc;
  const Tensor feats = model.backbone.forward(image, bc);

  std::vector<Proposal> kept_lines;
  for (const Proposal& lp : line_proposals) {
    Spotter::LineCache lc;
    auto [logits, deltas] = model.classify_line(feats, lp.box, lc);
    if (class_posterior(logits, 1) > model.cfg.score_threshold)
      kept_lines.push_back({apply_deltas(lp.box, deltas), ProposalKind::TextLine, lp.source});
  }

  std::vector<CharDetection> dets;
  for (const Proposal& cp : char_proposals) {
    Spotter::CharCache cc;
    auto [logits, deltas] = model.recognize_character(feats, cp.box, cc);
    int cls = 0;
    for (int64_t i = 1; i < logits.numel(); ++i)
      if (logits[i] > logits[cls]) cls = static_cast<int>(i);
    if (cls == model.cfg.background_class()) continue;
    dets.push_back({apply_deltas(cp.box, deltas), cls, class_posterior(logits, cls)});
  }

  auto preds = assemble_text(dets, kept_lines, model.cfg.assemble_iou);
  model.set_eval(was_eval);
  return preds;
}

}  // namespace gspot::spotter
