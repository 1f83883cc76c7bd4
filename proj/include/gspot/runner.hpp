#pragma once

#include <array>
#include <string>
#include <vector>

#include "gspot/config.hpp"
#include "gspot/train.hpp"

// Experiment commands behind the CLI: dataset generation, training,
// evaluation, ablation sweeps, and landmark visualization. Every command is a
// pure function of (config, seed) and drops the resolved config plus a run
// manifest into its output directory.
namespace gspot::runner {

// $GSPOT_OUT_ROOT, falling back to "runs".
std::string out_root();

// config.resolved + manifest.json (command, seed, config hash) under out_dir.
void write_run_manifest(const Config& cfg, const std::string& command,
                        const std::string& out_dir);

struct GenerateResult {
  std::string train_manifest, test_a_manifest, test_b_manifest;
  int train_images = 0;
  int test_images = 0;
  std::array<int, 3> styles_a{};  // per difficulty: simple, medium, hard
  std::array<int, 3> styles_b{};
};

// Benchmark layout: out_dir/{train,test_A,test_B}/manifest.jsonl. The two
// test sets are content-identical per index (same texts, layout, placement
// seed) and differ only in the style set used to draw them.
GenerateResult cmd_generate(const Config& cfg, const std::string& out_dir);

// Trains on dataset_dir/train, reporting dataset_dir/test_A as the final
// validation record when present. Writes train_result.json next to the
// stage checkpoints.
train::TrainResult cmd_train(const Config& cfg, const std::string& dataset_dir,
                             const std::string& out_dir);

struct EvalResult {
  double one_minus_ned = 0.0;
  double precision = 0.0, recall = 0.0, f = 0.0;
  std::string json_path;
};

// Rebuilds the model from the checkpoint alone and scores it on the manifest;
// metrics.json keys: 1-NED, P, R, F.
EvalResult cmd_eval(const std::string& checkpoint_path, const std::string& manifest_path,
                    const std::string& out_dir, const Config& cfg = {});

enum class AblationAxis { Fusion, Landmarks, Losses, GpmOff };
const char* axis_name(AblationAxis a);
AblationAxis axis_from_name(const std::string& name);  // throws on unknown

struct AblationRow {
  std::string variant;
  // per-seed test_B metrics, index-aligned with the seeds used
  std::vector<double> p, r, f, ned;
  double mean_p = 0.0, mean_r = 0.0, mean_f = 0.0, mean_ned = 0.0;
  double range_p = 0.0, range_r = 0.0, range_f = 0.0, range_ned = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<uint64_t> seeds;
  std::string csv_path, md_path, json_path;
};

// Trains every variant of the axis with shared data/seeds/schedule — only the
// ablated key differs — and scores each on test_B. Finished variant runs are
// reused when their recorded config hash matches (delete the run dir to force
// a retrain).
AblationResult cmd_ablate(const Config& cfg, const std::string& dataset_dir,
                          const std::string& out_dir, AblationAxis axis);

struct VisualizeResult {
  int images = 0;
  int chars = 0;
  std::vector<std::string> files;  // one lossless PPM per character crop
};

// K hard-argmax landmark markers per character crop.
VisualizeResult cmd_visualize(const std::string& checkpoint_path,
                              const std::string& manifest_path, const std::string& out_dir,
                              int max_images = 8);

}  // namespace gspot::runner
