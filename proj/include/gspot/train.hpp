#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gspot/checkpoint.hpp"
#include "gspot/config.hpp"
#include "gspot/evalkit.hpp"
#include "gspot/glyphgen.hpp"
#include "gspot/spotter.hpp"
#include "gspot/transforms.hpp"

// Three-stage schedule: (1) backbone + branch heads with the landmark path
// inactive, (2) the landmark net alone on character patches under the
// unsupervised objectives, (3) landmark net frozen, classification layer
// re-initialized, everything else finetuned with fusion active.
namespace gspot::train {

struct TrainConfig {
  spotter::SpotterConfig model;

  std::vector<int> stages = {1, 2, 3};  // must be exactly this; kept explicit
  std::vector<int> stage_epochs = {2, 2, 2};
  double lr = 0.02;
  std::vector<int> decay_epochs;  // 1-based epoch indices within each stage
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double grad_clip = 5.0;  // global-norm clip per step; <= 0 disables

  double lambda = 50.0;           // diversity weight in the stage-2 objective
  std::string losses = "both";    // both | align-only | div-only | gpm-off
  TransformRanges ranges;
  double jitter = 0.1;            // proposal jitter fraction
  double iou_threshold = 0.5;     // box matching when computing metrics
  uint64_t seed = 1;

  int max_train_images = 0;  // 0 = whole set
  int stage2_patches = 1200;  // unsupervised steps per stage-2 epoch
  int stage3_images = 0;      // images per stage-3 epoch (0 = all)
  int eval_images = 80;       // fixed train-split eval subset per epoch

  static TrainConfig from_config(const Config& c);  // validates
  void validate() const;
};

// One JSON-lines metric record per epoch.
struct EpochRecord {
  int stage = 0;
  int epoch = 0;  // 1-based within the stage
  std::string split = "train";
  double lr = 0.0;
  double loss = 0.0, crb_cls = 0.0, crb_box = 0.0, tdb_cls = 0.0, tdb_box = 0.0;
  double align = 0.0, div = 0.0;  // stage-2 objective terms
  double one_minus_ned = 0.0, precision = 0.0, recall = 0.0, f = 0.0;
};
std::string record_json(const EpochRecord& r);

struct EvalOptions {
  double jitter = 0.05;
  double iou_threshold = 0.5;
  uint64_t seed = 9001;
  int max_images = 0;  // 0 = all
};

// Teacher-forced evaluation: jittered ground-truth proposals, full spotting,
// one EvalRecord per image. Pure given (model params, options).
std::vector<evalkit::EvalRecord> evaluate_model(spotter::Spotter& model,
                                                const std::vector<glyphgen::GlyphSample>& samples,
                                                const EvalOptions& opt);

// Model init/serialization; checkpoints carry params + normalization stats +
// a model-shape record, so a Spotter can be rebuilt from the file alone.
spotter::Spotter make_model(const TrainConfig& cfg);
void store_model(Checkpoint& ckpt, spotter::Spotter& model);
void load_model(const Checkpoint& ckpt, spotter::Spotter& model);
spotter::SpotterConfig config_from_checkpoint(const Checkpoint& ckpt);
spotter::Spotter model_from_checkpoint(const Checkpoint& ckpt);

struct TrainResult {
  std::string stage1_ckpt, stage2_ckpt, stage3_ckpt;
  std::string metric_log;
  double first_train_ned = 0.0;  // stage 1, epoch 1 (progress oracle anchor)
  double final_train_ned = 0.0;  // last train-split record
  double val_ned = 0.0;          // final model on the validation set
};

// Writes stage checkpoints + metrics.jsonl under out_dir. Aborts with a
// stage/step-tagged error on non-finite losses; enforces the freeze
// contracts between stages.
TrainResult train_three_stage(const TrainConfig& cfg,
                              const std::vector<glyphgen::GlyphSample>& train_set,
                              const std::vector<glyphgen::GlyphSample>& val_set,
                              const std::string& out_dir);

}  // namespace gspot::train
