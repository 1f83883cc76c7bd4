#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "gspot/config.hpp"
#include "gspot/runner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gspot;

namespace {

Config load_config(const std::string& path, int64_t seed_override) {
  Config cfg = path.empty() ? Config() : Config::parse_file(path);
  if (seed_override >= 0) cfg.set_int("seed", seed_override);
  return cfg;
}

std::string default_out(const std::string& out, const char* command) {
  if (!out.empty()) return out;
  return (fs::path(runner::out_root()) / command).string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"glyph spotting experiment runner"};
  app.require_subcommand(1);

  std::string config_path, out_dir, dataset_dir, checkpoint, manifest, axis;
  int64_t seed = -1;
  int max_images = 8;

  auto* gen = app.add_subcommand("generate", "compose the train/test_A/test_B benchmark");
  gen->add_option("--config", config_path, "flat key = value config");
  gen->add_option("--seed", seed, "override the config seed");
  gen->add_option("--out", out_dir, "output directory");

  auto* tr = app.add_subcommand("train", "run the three-stage schedule");
  tr->add_option("--config", config_path, "flat key = value config");
  tr->add_option("--dataset", dataset_dir, "generated benchmark root")->required();
  tr->add_option("--seed", seed, "override the config seed");
  tr->add_option("--out", out_dir, "output directory");

  auto* ev = app.add_subcommand("eval", "score a checkpoint on a manifest");
  ev->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  ev->add_option("--manifest", manifest, "dataset manifest (JSON lines)")->required();
  ev->add_option("--config", config_path, "optional eval settings");
  ev->add_option("--out", out_dir, "output directory");

  auto* ab = app.add_subcommand("ablate", "train and score every variant of one axis");
  ab->add_option("--config", config_path, "flat key = value config");
  ab->add_option("--dataset", dataset_dir, "generated benchmark root")->required();
  ab->add_option("--axis", axis, "fusion | landmarks | losses | gpm_off")->required();
  ab->add_option("--seed", seed, "override the config seed");
  ab->add_option("--out", out_dir, "output directory");

  auto* vis = app.add_subcommand("visualize", "draw hard-argmax landmarks on char crops");
  vis->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  vis->add_option("--manifest", manifest, "dataset manifest (JSON lines)")->required();
  vis->add_option("--out", out_dir, "output directory");
  vis->add_option("--max-images", max_images, "cap on visualized images");

  CLI11_PARSE(app, argc, argv);

  try {
    json out;
    if (gen->parsed()) {
      const std::string dir = default_out(out_dir, "generate");
      const auto r = runner::cmd_generate(load_config(config_path, seed), dir);
      out = {{"command", "generate"},
             {"out", dir},
             {"train_manifest", r.train_manifest},
             {"test_a_manifest", r.test_a_manifest},
             {"test_b_manifest", r.test_b_manifest},
             {"train_images", r.train_images},
             {"test_images", r.test_images}};
    } else if (tr->parsed()) {
      const std::string dir = default_out(out_dir, "train");
      const auto r = runner::cmd_train(load_config(config_path, seed), dataset_dir, dir);
      out = {{"command", "train"},
             {"out", dir},
             {"stage3_ckpt", r.stage3_ckpt},
             {"metric_log", r.metric_log},
             {"first_train_ned", r.first_train_ned},
             {"final_train_ned", r.final_train_ned},
             {"val_ned", r.val_ned}};
    } else if (ev->parsed()) {
      const std::string dir = default_out(out_dir, "eval");
      const auto r = runner::cmd_eval(checkpoint, manifest, dir, load_config(config_path, seed));
      out = {{"command", "eval"},
             {"out", dir},
             {"1-NED", r.one_minus_ned},
             {"P", r.precision},
             {"R", r.recall},
             {"F", r.f},
             {"metrics", r.json_path}};
    } else if (ab->parsed()) {
      const std::string dir = default_out(out_dir, "ablate");
      const auto r = runner::cmd_ablate(load_config(config_path, seed), dataset_dir, dir,
                                        runner::axis_from_name(axis));
      out = {{"command", "ablate"},
             {"out", dir},
             {"csv", r.csv_path},
             {"markdown", r.md_path},
             {"detail", r.json_path},
             {"variants", r.rows.size()}};
    } else if (vis->parsed()) {
      const std::string dir = default_out(out_dir, "visualize");
      const auto r = runner::cmd_visualize(checkpoint, manifest, dir, max_images);
      out = {{"command", "visualize"},
             {"out", dir},
             {"images", r.images},
             {"chars", r.chars},
             {"files", r.files.size()}};
    }
    std::cout << out.dump() << "\n";
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
