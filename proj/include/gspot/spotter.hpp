#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gspot/geometry.hpp"
#include "gspot/glyphgen.hpp"
#include "gspot/gpm.hpp"
#include "gspot/grm.hpp"
#include "gspot/image.hpp"
#include "gspot/nn.hpp"
#include "gspot/rng.hpp"
#include "gspot/tensor.hpp"

// Desk-scale spotting pipeline: a small strided backbone stands in for the
// heavy detector of the original design, proposals are teacher-forced from
// jittered ground truth (a connected-component proposer exists behind a
// flag), and the character head reads fused landmark/grid features.
namespace gspot::spotter {

enum class ProposalKind { TextLine, Character };
enum class ProposalSource { GroundTruthJittered, External };

struct Proposal {
  Quad box;  // pixel coordinates on the input image
  ProposalKind kind = ProposalKind::Character;
  ProposalSource source = ProposalSource::GroundTruthJittered;
};

struct CharDetection {
  Quad box;
  int class_id = 0;
  double score = 0.0;  // normalized class posterior
};

struct SpotPrediction {
  Quad text_box;
  std::string text;  // concatenation of char_dets in assembly order
  std::vector<CharDetection> char_dets;
};

enum class Fusion { Off, Graph, Concat, Sum };
const char* fusion_name(Fusion f);
Fusion fusion_from_name(const std::string& name);  // throws on unknown

// Image (H,W) -> grayscale tensor (H,W,1) in [0,1].
Tensor image_tensor(const Image& img);

// 4 conv blocks, stride 4 overall, bias-free convs under per-channel norms:
// a zero image stays zero at initialization.
class Backbone {
 public:
  static constexpr int kStride = 4;

  void init(int c1, int c2, int d_out, Rng& rng);

  struct Cache {
    nn::Conv2d::Cache c1, c2, c3, c4;
    nn::BatchNorm::Cache b1, b2, b3, b4;
    nn::Relu::Cache r1, r2, r3, r4;
  };

  Tensor forward(const Tensor& image, Cache& c);  // (H,W,1) -> (H/4,W/4,D)
  Tensor backward(const Tensor& dy, Cache& c);
  std::vector<nn::ParamRef> params(const std::string& prefix = "backbone");
  // running normalization statistics (for checkpoints, not the optimizer)
  std::vector<nn::ParamRef> norm_state(const std::string& prefix = "backbone");
  void set_eval(bool eval);  // eval: read running normalization stats

  int d_out = 0;
  nn::Conv2d conv1, conv2, conv3, conv4;
  nn::BatchNorm bn1, bn2, bn3, bn4;
};

// Bilinear RoI pooling of a quad (pixel coords) onto out_size x out_size.
// Cell centers sit at fractions (k + 0.5) / out_size along the quad edges;
// reads outside the feature extent clamp to the border. Differentiable in
// the features (proposals are not learned). Throws when the box lies fully
// outside the feature extent or has non-positive area.
Tensor extract_roi(const Tensor& features, const Quad& box_pixels, int out_size, int stride);
void extract_roi_backward(const Tensor& features, const Quad& box_pixels, int out_size,
                          int stride, const Tensor& dpatch, Tensor* dfeatures);

// Axis-aligned box regression offsets (dcx, dcy, dlogw, dlogh) normalized by
// the proposal size; apply_deltas inverts box_deltas exactly.
Tensor box_deltas(const Quad& proposal, const Quad& target);
Quad apply_deltas(const Quad& proposal, const Tensor& deltas);

struct SpotterConfig {
  int alphabet_size = 50;
  int k_landmarks = 16;
  int c1 = 16, c2 = 32;  // backbone widths
  int d = 64;            // backbone output channels
  int gpm_width = 0;     // 0: same as d
  int roi_char = 14;     // F_c side
  int roi_gpm = 70;      // H side (landmark patch)
  int crb_hidden = 64;
  int tdb_hidden = 32;
  Fusion fusion = Fusion::Graph;
  double assemble_iou = 0.3;
  double score_threshold = 0.5;  // text/char acceptance at inference

  int background_class() const { return alphabet_size; }
  int landmark_map_size() const { return roi_gpm / 2; }
};

// Full model: backbone + text branch + character branch with optional
// landmark fusion.
class Spotter {
 public:
  void init(const SpotterConfig& config, Rng& rng);

  struct CharCache {
    Tensor fc, hp;  // RoI patches (roi_char^2 x D), (roi_gpm^2 x D)
    gpm::GpmNet::Cache gpm;
    Tensor maps;
    std::vector<Vec2> coords;
    Tensor hk;      // landmark features (K, D)
    grm::Grm::Cache grm;
    Tensor fused;
    nn::Linear::Cache fc1;
    nn::Relu::Cache relu;
    Tensor hidden;
    nn::Linear::Cache cls, box;
    Quad box_pixels;
  };

  struct LineCache {
    Tensor ft;
    nn::Linear::Cache fc1;
    nn::Relu::Cache relu;
    Tensor hidden;
    nn::Linear::Cache cls, box;
    Quad box_pixels;
  };

  // (class logits alphabet+1, box deltas 4); features from backbone_forward
  std::pair<Tensor, Tensor> recognize_character(const Tensor& features, const Quad& box,
                                                CharCache& cache);
  // gradient w.r.t. features accumulated into *dfeatures (same shape)
  void recognize_character_backward(const Tensor& features, const Tensor& dlogits,
                                    const Tensor& ddeltas, const CharCache& cache,
                                    Tensor* dfeatures);

  // (text/non-text logits 2, box deltas 4)
  std::pair<Tensor, Tensor> classify_line(const Tensor& features, const Quad& box,
                                          LineCache& cache);
  void classify_line_backward(const Tensor& features, const Tensor& dlogits,
                              const Tensor& ddeltas, const LineCache& cache, Tensor* dfeatures);

  std::vector<nn::ParamRef> params();          // everything
  std::vector<nn::ParamRef> backbone_params();
  std::vector<nn::ParamRef> gpm_params();
  std::vector<nn::ParamRef> grm_params();
  std::vector<nn::ParamRef> crb_params();      // character branch head
  std::vector<nn::ParamRef> tdb_params();      // text branch head
  std::vector<nn::ParamRef> cls_layer_params();  // the re-initialized stage-3 layer

  void set_eval(bool eval);          // normalization statistics mode everywhere
  void set_gpm_frozen(bool frozen);  // stage 3: landmark net statistics locked
  void reinit_cls_layer(Rng& rng);   // stage 3 entry
  bool is_eval() const { return eval_; }

  // Stage 1 trains backbone + heads with the landmark path contributing
  // nothing to the loss: character features pass straight through (the
  // concatenation mode zero-fills its landmark half so head shapes match).
  void set_fusion_active(bool active);
  bool fusion_active() const { return fusion_active_; }

  // Everything a checkpoint needs beyond params(): running normalization
  // statistics of the active modules. grad slots are null by construction.
  std::vector<nn::ParamRef> norm_state();

  SpotterConfig cfg;
  Backbone backbone;
  gpm::GpmNet gpm_net;
  grm::Grm grm_mod;
  nn::Linear crb_fc1, crb_cls, crb_box;
  nn::Linear tdb_fc1, tdb_cls, tdb_box;

 private:
  int fused_dim() const;
  void apply_modes();

  bool eval_ = false;
  bool gpm_frozen_ = false;
  bool fusion_active_ = true;
};

// Character-to-line assembly: each detection joins the line of maximal IOU
// when that IOU exceeds the threshold, lines order their members along the
// long axis (x for width >= height, else y).
std::vector<SpotPrediction> assemble_text(const std::vector<CharDetection>& char_dets,
                                          const std::vector<Proposal>& text_boxes,
                                          double iou_threshold);

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

// One matched proposal ready for the loss; background items carry no box.
struct LossItem {
  Tensor logits;
  int label = 0;
  Tensor deltas;   // empty for background
  Tensor targets;
};

struct LossReport {
  double crb_cls = 0.0, crb_box = 0.0;
  double tdb_cls = 0.0, tdb_box = 0.0;
  double rpn = 0.0;  // proposals are teacher-forced; kept at zero by design
  double total = 0.0;
};

struct LossGrads {
  std::vector<Tensor> crb_dlogits, crb_ddeltas;
  std::vector<Tensor> tdb_dlogits, tdb_ddeltas;
};

// Per-term means; total is exactly the sum of the reported terms.
LossReport spotting_loss(const std::vector<LossItem>& crb_items,
                         const std::vector<LossItem>& tdb_items, LossGrads* grads = nullptr);

// ---------------------------------------------------------------------------
// proposals
// ---------------------------------------------------------------------------

// +-frac uniform jitter of scale and center, axis-aligned.
Quad jitter_box(const Quad& box, double frac, Rng& rng);

struct CharProposal {
  Proposal p;
  int gt_index = -1;  // index into the sample's char annotations; -1 = background
};

// Jittered ground-truth positives plus one off-character negative each.
std::vector<CharProposal> make_char_proposals(const glyphgen::GlyphSample& sample, double frac,
                                              Rng& rng);
std::vector<CharProposal> make_char_proposals(const std::vector<glyphgen::CharAnn>& chars,
                                              int image_w, int image_h, double frac, Rng& rng);

struct LineProposal {
  Proposal p;
  int gt_index = -1;  // -1 = background (non-text crop)
};
std::vector<LineProposal> make_line_proposals(const std::vector<glyphgen::TextLineAnn>& lines,
                                              int image_w, int image_h, double frac, Rng& rng);

// Connected components of the inked pixels; the external-proposal fallback.
std::vector<Proposal> cc_char_proposals(const Image& img, int threshold = 64, int min_area = 4);
std::vector<Proposal> cc_line_proposals(const std::vector<Proposal>& char_proposals, int gap_px);

// ---------------------------------------------------------------------------
// inference
// ---------------------------------------------------------------------------

std::vector<SpotPrediction> spot_image(Spotter& model, const Tensor& image,
                                       const std::vector<Proposal>& line_proposals,
                                       const std::vector<Proposal>& char_proposals);

}  // namespace gspot::spotter
