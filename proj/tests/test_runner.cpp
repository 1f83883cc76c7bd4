#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gspot/checkpoint.hpp"
#include "gspot/config.hpp"
#include "gspot/evalkit.hpp"
#include "gspot/glyphgen.hpp"
#include "gspot/runner.hpp"
#include "gspot/train.hpp"

using namespace gspot;
namespace fs = std::filesystem;

namespace {

Config tiny_config() {
  return Config::parse_string(
      "alphabet_size = 5\n"
      "K = 2\n"
      "D = 3\n"
      "c1 = 2\n"
      "c2 = 3\n"
      "gpm_width = 4\n"
      "roi_char = 3\n"
      "roi_gpm = 4\n"
      "crb_hidden = 6\n"
      "tdb_hidden = 4\n"
      "fusion = graph\n"
      "n_train = 6\n"
      "n_test = 3\n"
      "image_w = 128\n"
      "image_h = 64\n"
      "cell_px = 32\n"
      "char_gap_px = 2\n"
      "lines_lo = 1\n"
      "lines_hi = 1\n"
      "len_lo = 2\n"
      "len_hi = 3\n"
      "vertical_frac = 0\n"
      "pool_simple = 4\n"
      "pool_medium = 4\n"
      "pool_hard = 2\n"
      "stage_epochs = 1, 1, 1\n"
      "lr = 0.01\n"
      "lambda = 1.0\n"
      "jitter = 0.05\n"
      "stage2_patches = 8\n"
      "eval_images = 4\n"
      "seed = 7\n");
}

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// relative path -> content, for whole-tree determinism checks
std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file())
      out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

// generate once per process; several cases read it
const fs::path& shared_dataset() {
  static fs::path dir = [] {
    fs::path p = fresh_dir("gspot_runner_data");
    runner::cmd_generate(tiny_config(), p.string());
    return p;
  }();
  return dir;
}

}  // namespace

TEST_CASE("out_root honors the environment override") {
  setenv("GSPOT_OUT_ROOT", "/tmp/gspot_root_test", 1);
  CHECK(runner::out_root() == "/tmp/gspot_root_test");
  unsetenv("GSPOT_OUT_ROOT");
  CHECK(runner::out_root() == "runs");
}

TEST_CASE("write_run_manifest drops the resolved config and hash") {
  const fs::path out = fresh_dir("gspot_runner_manifest");
  Config cfg = tiny_config();
  runner::write_run_manifest(cfg, "generate", out.string());
  CHECK(slurp(out / "config.resolved") == cfg.to_string());
  const auto j = nlohmann::json::parse(slurp(out / "manifest.json"));
  CHECK(j.at("command") == "generate");
  CHECK(j.at("seed") == 7);
  CHECK(j.at("config_hash").get<uint64_t>() == cfg.content_hash());
}

TEST_CASE("cmd_generate: manifests, style split, A/B content identity") {
  const fs::path& out = shared_dataset();
  const auto res = [&] {
    runner::GenerateResult r;
    r.train_manifest = (out / "train" / "manifest.jsonl").string();
    r.test_a_manifest = (out / "test_A" / "manifest.jsonl").string();
    r.test_b_manifest = (out / "test_B" / "manifest.jsonl").string();
    return r;
  }();
  REQUIRE(fs::exists(res.train_manifest));
  REQUIRE(fs::exists(res.test_a_manifest));
  REQUIRE(fs::exists(res.test_b_manifest));

  // style pool 4/4/2 splits to 2/2/1 per set
  const auto counts = nlohmann::json::parse(slurp(out / "counts.json"));
  CHECK(counts.at("styles_a").at("simple") == 2);
  CHECK(counts.at("styles_a").at("medium") == 2);
  CHECK(counts.at("styles_a").at("hard") == 1);
  CHECK(counts.at("styles_b") == counts.at("styles_a"));

  const auto a = glyphgen::read_manifest(res.test_a_manifest);
  const auto b = glyphgen::read_manifest(res.test_b_manifest);
  REQUIRE(a.size() == b.size());
  REQUIRE(a.size() == 3);
  for (size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].text_lines.size() == b[i].text_lines.size());
    for (size_t l = 0; l < a[i].text_lines.size(); ++l)
      CHECK(a[i].text_lines[l].text == b[i].text_lines[l].text);
    REQUIRE(a[i].chars.size() == b[i].chars.size());
    for (size_t c = 0; c < a[i].chars.size(); ++c)
      CHECK(a[i].chars[c].ch == b[i].chars[c].ch);
    CHECK(a[i].difficulty == b[i].difficulty);  // styles are paired by tier
  }

  // all annotations stay inside the configured alphabet
  for (const auto& rec : glyphgen::read_manifest(res.train_manifest))
    for (const auto& ca : rec.chars) {
      const int cls = glyphgen::symbol_class(ca.ch);
      CHECK(cls >= 0);
      CHECK(cls < 5);
    }
}

TEST_CASE("cmd_generate is byte-deterministic per (config, seed)") {
  const fs::path o2 = fresh_dir("gspot_runner_data2");
  runner::cmd_generate(tiny_config(), o2.string());
  for (const char* sub : {"train", "test_A", "test_B"}) {
    const auto t1 = tree_bytes(shared_dataset() / sub);
    const auto t2 = tree_bytes(o2 / sub);
    CHECK(t1 == t2);
  }
  Config other = tiny_config();
  other.set_int("seed", 8);
  const fs::path o3 = fresh_dir("gspot_runner_data3");
  runner::cmd_generate(other, o3.string());
  CHECK(tree_bytes(shared_dataset() / "train") != tree_bytes(o3 / "train"));
}

TEST_CASE("cmd_train emits artifacts and a parsable result summary") {
  const fs::path out = fresh_dir("gspot_runner_train");
  const auto res = runner::cmd_train(tiny_config(), shared_dataset().string(), out.string());
  CHECK(fs::exists(res.stage1_ckpt));
  CHECK(fs::exists(res.stage3_ckpt));
  CHECK(fs::exists(res.metric_log));
  const auto j = nlohmann::json::parse(slurp(out / "train_result.json"));
  CHECK(j.at("stage3_ckpt") == res.stage3_ckpt);
  CHECK(j.at("final_train_ned").get<double>() == doctest::Approx(res.final_train_ned));
  CHECK(j.at("val_ned").get<double>() == doctest::Approx(res.val_ned));  // test_A as val
  CHECK(fs::exists(out / "config.resolved"));
}

TEST_CASE("cmd_eval equals the direct metric computation") {
  const fs::path tdir = fresh_dir("gspot_runner_train_eval");
  const auto tr = runner::cmd_train(tiny_config(), shared_dataset().string(), tdir.string());

  const std::string manifest = (shared_dataset() / "test_B" / "manifest.jsonl").string();
  const fs::path out = fresh_dir("gspot_runner_eval");
  const auto ev = runner::cmd_eval(tr.stage3_ckpt, manifest, out.string());

  // replicate: model from checkpoint, default eval options
  const Checkpoint ckpt = Checkpoint::load(tr.stage3_ckpt);
  spotter::Spotter model = train::model_from_checkpoint(ckpt);
  const auto samples = glyphgen::read_dataset(manifest);
  train::EvalOptions opt;  // cmd_eval defaults: jitter 0.05, iou 0.5, seed 9001
  const auto records = train::evaluate_model(model, samples, opt);
  CHECK(ev.one_minus_ned == evalkit::one_minus_ned(records, opt.iou_threshold));
  const auto prf = evalkit::detection_prf(records, opt.iou_threshold);
  CHECK(ev.precision == prf.precision);
  CHECK(ev.recall == prf.recall);
  CHECK(ev.f == prf.f);

  const auto j = nlohmann::json::parse(slurp(ev.json_path));
  for (const char* k : {"1-NED", "P", "R", "F"}) REQUIRE(j.contains(k));
  CHECK(j.at("1-NED").get<double>() == doctest::Approx(ev.one_minus_ned));
}

TEST_CASE("cmd_eval runs on the bundled fixture, no training involved") {
  const fs::path fixture = fs::path(GSPOT_SOURCE_DIR) / "assets" / "eval_fixture";
  REQUIRE(fs::exists(fixture / "model.ckpt"));
  const std::string manifest = (fixture / "data" / "manifest.jsonl").string();

  const fs::path o1 = fresh_dir("gspot_fixture_eval1");
  const auto e1 = runner::cmd_eval((fixture / "model.ckpt").string(), manifest, o1.string());
  const auto j = nlohmann::json::parse(slurp(e1.json_path));
  for (const char* k : {"1-NED", "P", "R", "F"}) {
    REQUIRE(j.contains(k));
    const double v = j.at(k).get<double>();
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }

  const fs::path o2 = fresh_dir("gspot_fixture_eval2");
  const auto e2 = runner::cmd_eval((fixture / "model.ckpt").string(), manifest, o2.string());
  CHECK(e1.one_minus_ned == e2.one_minus_ned);
  CHECK(e1.f == e2.f);
}

TEST_CASE("checkpoint meta: model is rebuilt from the file alone") {
  const fs::path tdir = fresh_dir("gspot_runner_meta");
  const auto tr = runner::cmd_train(tiny_config(), shared_dataset().string(), tdir.string());
  const Checkpoint ckpt = Checkpoint::load(tr.stage3_ckpt);
  const spotter::SpotterConfig mc = train::config_from_checkpoint(ckpt);
  CHECK(mc.alphabet_size == 5);
  CHECK(mc.k_landmarks == 2);
  CHECK(mc.d == 3);
  CHECK(mc.roi_gpm == 4);
  CHECK(mc.fusion == spotter::Fusion::Graph);
  Checkpoint empty;
  CHECK_THROWS(train::config_from_checkpoint(empty));
}

TEST_CASE("axis names round trip and reject unknowns") {
  using runner::AblationAxis;
  for (AblationAxis a : {AblationAxis::Fusion, AblationAxis::Landmarks, AblationAxis::Losses,
                         AblationAxis::GpmOff})
    CHECK(runner::axis_from_name(runner::axis_name(a)) == a);
  CHECK_THROWS_AS(runner::axis_from_name("styles"), std::invalid_argument);
}

TEST_CASE("cmd_ablate: row sets per axis, shared seeds, cache reuse") {
  Config cfg = tiny_config();
  cfg.set_int("ablate_seeds", 1);  // keep the sweep small; labels are the point
  const fs::path fdir = fresh_dir("gspot_runner_abl_fusion");
  const auto fus = runner::cmd_ablate(cfg, shared_dataset().string(), fdir.string(),
                                      runner::AblationAxis::Fusion);
  REQUIRE(fus.rows.size() == 3);
  CHECK(fus.rows[0].variant == "concatenation");
  CHECK(fus.rows[1].variant == "summation");
  CHECK(fus.rows[2].variant == "graph");
  for (const auto& r : fus.rows) REQUIRE(r.ned.size() == 1);

  const fs::path ldir = fresh_dir("gspot_runner_abl_lm");
  const auto lm = runner::cmd_ablate(cfg, shared_dataset().string(), ldir.string(),
                                     runner::AblationAxis::Landmarks);
  REQUIRE(lm.rows.size() == 4);
  CHECK(lm.rows[0].variant == "K=4");
  CHECK(lm.rows[3].variant == "K=24");

  const fs::path odir = fresh_dir("gspot_runner_abl_off");
  Config two = cfg;
  two.set_int("ablate_seeds", 2);
  const auto off = runner::cmd_ablate(two, shared_dataset().string(), odir.string(),
                                      runner::AblationAxis::GpmOff);
  REQUIRE(off.rows.size() == 2);
  CHECK(off.rows[0].variant == "both");
  CHECK(off.rows[1].variant == "gpm-off");
  CHECK(off.seeds == std::vector<uint64_t>{7, 8});
  for (const auto& r : off.rows) {
    REQUIRE(r.ned.size() == 2);
    CHECK(r.mean_ned == doctest::Approx((r.ned[0] + r.ned[1]) / 2.0));
    CHECK(r.range_ned == doctest::Approx(std::abs(r.ned[0] - r.ned[1])));
  }

  // artifacts
  const std::string csv = slurp(off.csv_path);
  CHECK(csv.rfind("variant,P,R,F,1-NED,P_range,R_range,F_range,1-NED_range\n", 0) == 0);
  const std::string md = slurp(off.md_path);
  CHECK(md.find("| Variant | P | R | F | 1-NED |") != std::string::npos);
  CHECK(md.find("| gpm-off | ") != std::string::npos);

  // second invocation reuses finished runs and reproduces the tables
  const std::string detail_before = slurp(off.json_path);
  const auto off2 = runner::cmd_ablate(two, shared_dataset().string(), odir.string(),
                                       runner::AblationAxis::GpmOff);
  CHECK(slurp(off2.json_path) == detail_before);
}

TEST_CASE("cmd_ablate losses axis lists the objective variants") {
  Config cfg = tiny_config();
  cfg.set_int("ablate_seeds", 1);
  const fs::path dir = fresh_dir("gspot_runner_abl_losses");
  const auto res = runner::cmd_ablate(cfg, shared_dataset().string(), dir.string(),
                                      runner::AblationAxis::Losses);
  REQUIRE(res.rows.size() == 4);
  CHECK(res.rows[0].variant == "align-only");
  CHECK(res.rows[1].variant == "div-only");
  CHECK(res.rows[2].variant == "both");
  CHECK(res.rows[3].variant == "gpm-off");
}

TEST_CASE("cmd_visualize: one lossless crop per char, K markers, deterministic") {
  const fs::path tdir = fresh_dir("gspot_runner_vis_train");
  const auto tr = runner::cmd_train(tiny_config(), shared_dataset().string(), tdir.string());
  const std::string manifest = (shared_dataset() / "test_A" / "manifest.jsonl").string();

  const fs::path v1 = fresh_dir("gspot_runner_vis1");
  const auto res = runner::cmd_visualize(tr.stage3_ckpt, manifest, v1.string(), 2);
  CHECK(res.images == 2);
  const auto recs = glyphgen::read_manifest(manifest);
  size_t expect_chars = recs[0].chars.size() + recs[1].chars.size();
  CHECK(static_cast<size_t>(res.chars) == expect_chars);
  REQUIRE(res.files.size() == expect_chars);

  for (const auto& f : res.files) {
    REQUIRE(fs::exists(f));
    const std::string bytes = slurp(f);
    CHECK(bytes.rfind("P6\n", 0) == 0);
    // marker color present (pure marker pixels are (255,40,40))
    bool found = false;
    for (size_t i = 0; i + 2 < bytes.size(); ++i)
      if (static_cast<uint8_t>(bytes[i]) == 255 && static_cast<uint8_t>(bytes[i + 1]) == 40 &&
          static_cast<uint8_t>(bytes[i + 2]) == 40) {
        found = true;
        break;
      }
    CHECK(found);
  }

  const fs::path v2 = fresh_dir("gspot_runner_vis2");
  runner::cmd_visualize(tr.stage3_ckpt, manifest, v2.string(), 2);
  CHECK(tree_bytes(v1) == tree_bytes(v2));
}
