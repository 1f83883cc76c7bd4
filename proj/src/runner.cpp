#include "gspot/runner.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "gspot/checkpoint.hpp"
#include "gspot/evalkit.hpp"
#include "gspot/glyphgen.hpp"
#include "gspot/gpm.hpp"
#include "gspot/image.hpp"
#include "gspot/spotter.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gspot::runner {

namespace {

// seed stream ids for generation content draws
constexpr uint64_t kAlphaStream = 0xA1FA;
constexpr uint64_t kPoolStream = 0x900C;
constexpr uint64_t kSplitStream = 0x5317;
constexpr uint64_t kTrainSceneStream = 0x5CEE;
constexpr uint64_t kTestSceneStream = 0x7E57;
constexpr uint64_t kAblateEvalStream = 0xAB1E;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return s;
}

// scene content drawn once so the A/B renders stay identical up to style
struct SceneDraft {
  std::vector<std::string> texts;
  glyphgen::Layout layout = glyphgen::Layout::Horizontal;
  size_t style_idx = 0;
  uint64_t compose_seed = 0;
};

SceneDraft draw_scene(Rng& rng, int alphabet_size, int lines_lo, int lines_hi, int len_lo,
                      int len_hi, double vertical_frac, size_t n_styles, uint64_t compose_seed) {
  SceneDraft d;
  const int n_lines = lines_lo + static_cast<int>(rng.uniform_int(lines_hi - lines_lo + 1));
  for (int l = 0; l < n_lines; ++l) {
    const int len = len_lo + static_cast<int>(rng.uniform_int(len_hi - len_lo + 1));
    std::string text;
    for (int i = 0; i < len; ++i)
      text += glyphgen::class_symbol(static_cast<int>(rng.uniform_int(alphabet_size)));
    d.texts.push_back(text);
  }
  d.layout = rng.uniform() < vertical_frac ? glyphgen::Layout::Vertical
                                           : glyphgen::Layout::Horizontal;
  d.style_idx = static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(n_styles)));
  d.compose_seed = compose_seed;
  return d;
}

struct EvalNumbers {
  double ned = 0.0, p = 0.0, r = 0.0, f = 0.0;
};

EvalNumbers score_records(const std::vector<evalkit::EvalRecord>& records, double iou) {
  EvalNumbers n;
  n.ned = evalkit::one_minus_ned(records, iou);
  const evalkit::Prf prf = evalkit::detection_prf(records, iou);
  n.p = prf.precision;
  n.r = prf.recall;
  n.f = prf.f;
  return n;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

std::string out_root() {
  if (const char* env = std::getenv("GSPOT_OUT_ROOT"); env && *env) return env;
  return "runs";
}

void write_run_manifest(const Config& cfg, const std::string& command,
                        const std::string& out_dir) {
  fs::create_directories(out_dir);
  write_text(fs::path(out_dir) / "config.resolved", cfg.to_string());
  json j;
  j["command"] = command;
  j["seed"] = cfg.get_int("seed", 1);
  j["out_dir"] = out_dir;
  j["config"] = "config.resolved";
  j["config_hash"] = cfg.content_hash();
  write_text(fs::path(out_dir) / "manifest.json", j.dump(2) + "\n");
}

GenerateResult cmd_generate(const Config& cfg, const std::string& out_dir) {
  const int alphabet_size = static_cast<int>(cfg.get_int("alphabet_size", 50));
  const int n_train = static_cast<int>(cfg.get_int("n_train", 200));
  const int n_test = static_cast<int>(cfg.get_int("n_test", 60));
  const int lines_lo = static_cast<int>(cfg.get_int("lines_lo", 1));
  const int lines_hi = static_cast<int>(cfg.get_int("lines_hi", 2));
  const int len_lo = static_cast<int>(cfg.get_int("len_lo", 2));
  const int len_hi = static_cast<int>(cfg.get_int("len_hi", 4));
  const double vertical_frac = cfg.get_real("vertical_frac", 0.25);
  const int pool_simple = static_cast<int>(cfg.get_int("pool_simple", 12));
  const int pool_medium = static_cast<int>(cfg.get_int("pool_medium", 18));
  const int pool_hard = static_cast<int>(cfg.get_int("pool_hard", 10));
  const uint64_t seed = static_cast<uint64_t>(cfg.get_int("seed", 1));

  glyphgen::SceneConfig scene;
  scene.image_w = static_cast<int>(cfg.get_int("image_w", scene.image_w));
  scene.image_h = static_cast<int>(cfg.get_int("image_h", scene.image_h));
  scene.cell_px = static_cast<int>(cfg.get_int("cell_px", scene.cell_px));
  scene.char_gap_px = static_cast<int>(cfg.get_int("char_gap_px", scene.char_gap_px));
  scene.line_pad_px = static_cast<int>(cfg.get_int("line_pad_px", scene.line_pad_px));

  if (lines_lo < 1 || lines_hi < lines_lo || len_lo < 1 || len_hi < len_lo)
    throw std::invalid_argument("generate: malformed lines/len ranges");

  const auto alphabet = glyphgen::make_alphabet(alphabet_size, Rng::mix(seed, kAlphaStream));
  const auto pool =
      glyphgen::make_style_pool(pool_simple, pool_medium, pool_hard, Rng::mix(seed, kPoolStream));
  const auto [styles_a, styles_b] = glyphgen::split_styles(pool, Rng::mix(seed, kSplitStream));

  GenerateResult res;
  for (const auto& s : styles_a) res.styles_a[static_cast<size_t>(s.difficulty)]++;
  for (const auto& s : styles_b) res.styles_b[static_cast<size_t>(s.difficulty)]++;

  // training set: A styles only
  std::vector<glyphgen::GlyphSample> train_set;
  train_set.reserve(static_cast<size_t>(n_train));
  for (int i = 0; i < n_train; ++i) {
    Rng rng(Rng::mix(seed, kTrainSceneStream, static_cast<uint64_t>(i)));
    for (int attempt = 0;; ++attempt) {
      const SceneDraft d =
          draw_scene(rng, alphabet_size, lines_lo, lines_hi, len_lo, len_hi, vertical_frac,
                     styles_a.size(),
                     Rng::mix(seed, kTrainSceneStream, (static_cast<uint64_t>(i) << 8) | 1));
      try {
        // one style per image, repeated across its lines
        const std::vector<glyphgen::StyleParams> sv(d.texts.size(), styles_a[d.style_idx]);
        train_set.push_back(glyphgen::compose_scene(
            alphabet, d.texts, sv, d.layout,
            Rng::mix(d.compose_seed, static_cast<uint64_t>(attempt)), scene));
        break;
      } catch (const std::exception&) {
        if (attempt >= 20) throw;
      }
    }
  }

  // test pairs: content drawn once, rendered with the paired style of each set
  std::vector<glyphgen::GlyphSample> test_a, test_b;
  test_a.reserve(static_cast<size_t>(n_test));
  test_b.reserve(static_cast<size_t>(n_test));
  for (int i = 0; i < n_test; ++i) {
    Rng rng(Rng::mix(seed, kTestSceneStream, static_cast<uint64_t>(i)));
    const SceneDraft d =
        draw_scene(rng, alphabet_size, lines_lo, lines_hi, len_lo, len_hi, vertical_frac,
                   std::min(styles_a.size(), styles_b.size()),
                   Rng::mix(seed, kTestSceneStream, (static_cast<uint64_t>(i) << 8) | 1));
    for (int attempt = 0;; ++attempt) {
      const uint64_t cseed = Rng::mix(d.compose_seed, static_cast<uint64_t>(attempt));
      try {
        const std::vector<glyphgen::StyleParams> sa(d.texts.size(), styles_a[d.style_idx]);
        const std::vector<glyphgen::StyleParams> sb(d.texts.size(), styles_b[d.style_idx]);
        glyphgen::GlyphSample a =
            glyphgen::compose_scene(alphabet, d.texts, sa, d.layout, cseed, scene);
        glyphgen::GlyphSample b =
            glyphgen::compose_scene(alphabet, d.texts, sb, d.layout, cseed, scene);
        test_a.push_back(std::move(a));
        test_b.push_back(std::move(b));
        break;
      } catch (const std::exception&) {
        if (attempt >= 20) throw;
      }
    }
  }

  write_run_manifest(cfg, "generate", out_dir);
  res.train_manifest = glyphgen::write_dataset(train_set, (fs::path(out_dir) / "train").string());
  res.test_a_manifest =
      glyphgen::write_dataset(test_a, (fs::path(out_dir) / "test_A").string());
  res.test_b_manifest =
      glyphgen::write_dataset(test_b, (fs::path(out_dir) / "test_B").string());
  res.train_images = n_train;
  res.test_images = n_test;

  json counts;
  counts["train_images"] = n_train;
  counts["test_images_per_set"] = n_test;
  counts["alphabet_size"] = alphabet_size;
  counts["styles_per_set"] = styles_a.size();
  counts["styles_a"] = {{"simple", res.styles_a[0]},
                        {"medium", res.styles_a[1]},
                        {"hard", res.styles_a[2]}};
  counts["styles_b"] = {{"simple", res.styles_b[0]},
                        {"medium", res.styles_b[1]},
                        {"hard", res.styles_b[2]}};
  write_text(fs::path(out_dir) / "counts.json", counts.dump(2) + "\n");
  return res;
}

train::TrainResult cmd_train(const Config& cfg, const std::string& dataset_dir,
                             const std::string& out_dir) {
  const train::TrainConfig tc = train::TrainConfig::from_config(cfg);
  const fs::path data(dataset_dir);
  const auto train_set = glyphgen::read_dataset((data / "train" / "manifest.jsonl").string());
  std::vector<glyphgen::GlyphSample> val_set;
  if (fs::exists(data / "test_A" / "manifest.jsonl"))
    val_set = glyphgen::read_dataset((data / "test_A" / "manifest.jsonl").string());

  write_run_manifest(cfg, "train", out_dir);
  const train::TrainResult res = train::train_three_stage(tc, train_set, val_set, out_dir);

  json j;
  j["stage1_ckpt"] = res.stage1_ckpt;
  j["stage2_ckpt"] = res.stage2_ckpt;
  j["stage3_ckpt"] = res.stage3_ckpt;
  j["metric_log"] = res.metric_log;
  j["first_train_ned"] = res.first_train_ned;
  j["final_train_ned"] = res.final_train_ned;
  j["val_ned"] = res.val_ned;
  write_text(fs::path(out_dir) / "train_result.json", j.dump(2) + "\n");
  return res;
}

EvalResult cmd_eval(const std::string& checkpoint_path, const std::string& manifest_path,
                    const std::string& out_dir, const Config& cfg) {
  const Checkpoint ckpt = Checkpoint::load(checkpoint_path);
  spotter::Spotter model = train::model_from_checkpoint(ckpt);
  const auto samples = glyphgen::read_dataset(manifest_path);

  train::EvalOptions opt;
  opt.jitter = cfg.get_real("eval_jitter", opt.jitter);
  opt.iou_threshold = cfg.get_real("iou_threshold", opt.iou_threshold);
  opt.seed = static_cast<uint64_t>(cfg.get_int("eval_seed", static_cast<int64_t>(opt.seed)));
  const auto records = train::evaluate_model(model, samples, opt);
  const EvalNumbers n = score_records(records, opt.iou_threshold);

  write_run_manifest(cfg, "eval", out_dir);
  json j;
  j["1-NED"] = n.ned;
  j["P"] = n.p;
  j["R"] = n.r;
  j["F"] = n.f;
  const fs::path jp = fs::path(out_dir) / "metrics.json";
  write_text(jp, j.dump(2) + "\n");

  EvalResult res;
  res.one_minus_ned = n.ned;
  res.precision = n.p;
  res.recall = n.r;
  res.f = n.f;
  res.json_path = jp.string();
  return res;
}

const char* axis_name(AblationAxis a) {
  switch (a) {
    case AblationAxis::Fusion: return "fusion";
    case AblationAxis::Landmarks: return "landmarks";
    case AblationAxis::Losses: return "losses";
    case AblationAxis::GpmOff: return "gpm_off";
  }
  throw std::invalid_argument("unknown ablation axis");
}

AblationAxis axis_from_name(const std::string& name) {
  if (name == "fusion") return AblationAxis::Fusion;
  if (name == "landmarks") return AblationAxis::Landmarks;
  if (name == "losses") return AblationAxis::Losses;
  if (name == "gpm_off") return AblationAxis::GpmOff;
  throw std::invalid_argument("unknown ablation axis: " + name);
}

AblationResult cmd_ablate(const Config& cfg, const std::string& dataset_dir,
                          const std::string& out_dir, AblationAxis axis) {
  struct Variant {
    std::string label, key, value;
  };
  std::vector<Variant> variants;
  switch (axis) {
    case AblationAxis::Fusion:
      variants = {{"concatenation", "fusion", "concatenation"},
                  {"summation", "fusion", "summation"},
                  {"graph", "fusion", "graph"}};
      break;
    case AblationAxis::Landmarks:
      variants = {{"K=4", "K", "4"}, {"K=8", "K", "8"}, {"K=16", "K", "16"},
                  {"K=24", "K", "24"}};
      break;
    case AblationAxis::Losses:
      variants = {{"align-only", "losses", "align-only"},
                  {"div-only", "losses", "div-only"},
                  {"both", "losses", "both"},
                  {"gpm-off", "losses", "gpm-off"}};
      break;
    case AblationAxis::GpmOff:
      variants = {{"both", "losses", "both"}, {"gpm-off", "losses", "gpm-off"}};
      break;
  }

  const uint64_t base_seed = static_cast<uint64_t>(cfg.get_int("seed", 1));
  const int n_seeds = static_cast<int>(cfg.get_int("ablate_seeds", 3));
  const double iou = cfg.get_real("iou_threshold", 0.5);
  const std::string test_b = (fs::path(dataset_dir) / "test_B" / "manifest.jsonl").string();
  const auto test_set = glyphgen::read_dataset(test_b);

  write_run_manifest(cfg, "ablate", out_dir);

  AblationResult res;
  for (int si = 0; si < n_seeds; ++si) res.seeds.push_back(base_seed + static_cast<uint64_t>(si));

  for (const Variant& v : variants) {
    AblationRow row;
    row.variant = v.label;
    for (int si = 0; si < n_seeds; ++si) {
      Config vc = cfg;
      vc.set(v.key, v.value);
      vc.set_int("seed", static_cast<int64_t>(res.seeds[static_cast<size_t>(si)]));
      const uint64_t vhash = vc.content_hash();

      std::string dir_label = v.label;
      for (char& ch : dir_label)
        if (ch == '=' || ch == ' ') ch = '_';
      const fs::path run_dir = fs::path(out_dir) / (std::string(axis_name(axis)) + "_" +
                                                    dir_label + "_s" + std::to_string(si));
      const fs::path done = run_dir / "done.json";

      EvalNumbers n;
      bool reused = false;
      if (fs::exists(done)) {
        const json j = json::parse(read_text(done));
        if (j.value("config_hash", uint64_t{0}) == vhash) {
          n.ned = j.at("1-NED").get<double>();
          n.p = j.at("P").get<double>();
          n.r = j.at("R").get<double>();
          n.f = j.at("F").get<double>();
          reused = true;
        }
      }
      if (!reused) {
        const train::TrainResult tr = cmd_train(vc, dataset_dir, run_dir.string());
        const Checkpoint ckpt = Checkpoint::load(tr.stage3_ckpt);
        spotter::Spotter model = train::model_from_checkpoint(ckpt);
        train::EvalOptions opt;
        opt.jitter = 0.05;
        opt.iou_threshold = iou;
        // shared across variants at the same seed index: only the axis differs
        opt.seed = Rng::mix(base_seed, kAblateEvalStream, static_cast<uint64_t>(si));
        const auto records = train::evaluate_model(model, test_set, opt);
        n = score_records(records, iou);
        json j;
        j["config_hash"] = vhash;
        j["1-NED"] = n.ned;
        j["P"] = n.p;
        j["R"] = n.r;
        j["F"] = n.f;
        write_text(done, j.dump(2) + "\n");
      }
      row.p.push_back(n.p);
      row.r.push_back(n.r);
      row.f.push_back(n.f);
      row.ned.push_back(n.ned);
    }

    auto mean_of = [](const std::vector<double>& v) {
      double s = 0;
      for (double x : v) s += x;
      return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    };
    auto range_of = [](const std::vector<double>& v) {
      if (v.empty()) return 0.0;
      return *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end());
    };
    row.mean_p = mean_of(row.p);
    row.mean_r = mean_of(row.r);
    row.mean_f = mean_of(row.f);
    row.mean_ned = mean_of(row.ned);
    row.range_p = range_of(row.p);
    row.range_r = range_of(row.r);
    row.range_f = range_of(row.f);
    row.range_ned = range_of(row.ned);
    res.rows.push_back(std::move(row));
  }

  // CSV
  std::string csv = "variant,P,R,F,1-NED,P_range,R_range,F_range,1-NED_range\n";
  for (const auto& r : res.rows)
    csv += r.variant + "," + fmt(r.mean_p) + "," + fmt(r.mean_r) + "," + fmt(r.mean_f) + "," +
           fmt(r.mean_ned) + "," + fmt(r.range_p) + "," + fmt(r.range_r) + "," +
           fmt(r.range_f) + "," + fmt(r.range_ned) + "\n";
  const fs::path csvp = fs::path(out_dir) / "ablate.csv";
  write_text(csvp, csv);

  // markdown, paper-table columns
  std::string md = "| Variant | P | R | F | 1-NED |\n|---|---|---|---|---|\n";
  for (const auto& r : res.rows)
    md += "| " + r.variant + " | " + fmt(r.mean_p) + " ± " + fmt(r.range_p) + " | " +
          fmt(r.mean_r) + " ± " + fmt(r.range_r) + " | " + fmt(r.mean_f) + " ± " +
          fmt(r.range_f) + " | " + fmt(r.mean_ned) + " ± " + fmt(r.range_ned) + " |\n";
  const fs::path mdp = fs::path(out_dir) / "ablate.md";
  write_text(mdp, md);

  // per-seed detail for downstream checks
  json detail;
  detail["axis"] = axis_name(axis);
  detail["seeds"] = res.seeds;
  detail["rows"] = json::array();
  for (const auto& r : res.rows) {
    json row;
    row["variant"] = r.variant;
    row["P"] = r.p;
    row["R"] = r.r;
    row["F"] = r.f;
    row["1-NED"] = r.ned;
    detail["rows"].push_back(row);
  }
  const fs::path jsp = fs::path(out_dir) / "ablate.json";
  write_text(jsp, detail.dump(2) + "\n");

  res.csv_path = csvp.string();
  res.md_path = mdp.string();
  res.json_path = jsp.string();
  return res;
}

VisualizeResult cmd_visualize(const std::string& checkpoint_path,
                              const std::string& manifest_path, const std::string& out_dir,
                              int max_images) {
  const Checkpoint ckpt = Checkpoint::load(checkpoint_path);
  spotter::Spotter model = train::model_from_checkpoint(ckpt);
  model.set_eval(true);
  auto samples = glyphgen::read_dataset(manifest_path);
  if (max_images > 0 && samples.size() > static_cast<size_t>(max_images))
    samples.resize(static_cast<size_t>(max_images));

  const fs::path dir = fs::path(out_dir) / "landmarks";
  fs::create_directories(dir);
  const int k = model.cfg.k_landmarks;
  const int scale = 4;  // nearest-neighbor zoom of the crop

  VisualizeResult res;
  for (size_t i = 0; i < samples.size(); ++i) {
    const glyphgen::GlyphSample& s = samples[i];
    spotter::Backbone::Cache bc;
    const Tensor feats = model.backbone.forward(spotter::image_tensor(s.image), bc);
    for (size_t j = 0; j < s.chars.size(); ++j) {
      const Quad& q = s.chars[j].points;
      const Tensor patch =
          spotter::extract_roi(feats, q, model.cfg.roi_gpm, spotter::Backbone::kStride);
      gpm::GpmNet::Cache gc;
      const Tensor maps = model.gpm_net.forward(patch, gc);  // (S,S,K)
      const int sdim = maps.dim(0);

      // crop the character's pixel extent
      const int x0 = std::max(0, static_cast<int>(std::floor(q.min_x())));
      const int y0 = std::max(0, static_cast<int>(std::floor(q.min_y())));
      const int x1 = std::min(s.image.width, static_cast<int>(std::ceil(q.max_x())));
      const int y1 = std::min(s.image.height, static_cast<int>(std::ceil(q.max_y())));
      const int cw = std::max(1, x1 - x0), ch = std::max(1, y1 - y0);
      ImageRgb canvas(cw * scale, ch * scale);
      for (int y = 0; y < ch * scale; ++y)
        for (int x = 0; x < cw * scale; ++x) {
          const uint8_t g = s.image.at(y0 + y / scale, x0 + x / scale);
          canvas.set(y, x, g, g, g);
        }

      for (int lm = 0; lm < k; ++lm) {
        // hard argmax over the pooled map, row-major first maximum
        int best_r = 0, best_c = 0;
        double best = -1.0;
        for (int r = 0; r < sdim; ++r)
          for (int c = 0; c < sdim; ++c)
            if (maps.at(r, c, lm) > best) {
              best = maps.at(r, c, lm);
              best_r = r;
              best_c = c;
            }
        const double u = (best_c + 0.5) / sdim, v = (best_r + 0.5) / sdim;
        // bilinear point on the quad, into crop pixels
        const Vec2 top{q.p[0].x + (q.p[1].x - q.p[0].x) * u,
                       q.p[0].y + (q.p[1].y - q.p[0].y) * u};
        const Vec2 bot{q.p[3].x + (q.p[2].x - q.p[3].x) * u,
                       q.p[3].y + (q.p[2].y - q.p[3].y) * u};
        const double px = (top.x + (bot.x - top.x) * v - x0) * scale;
        const double py = (top.y + (bot.y - top.y) * v - y0) * scale;
        const int cx = std::clamp(static_cast<int>(px), 0, cw * scale - 1);
        const int cy = std::clamp(static_cast<int>(py), 0, ch * scale - 1);
        for (int d = -3; d <= 3; ++d) {
          if (cx + d >= 0 && cx + d < cw * scale) canvas.set(cy, cx + d, 255, 40, 40);
          if (cy + d >= 0 && cy + d < ch * scale) canvas.set(cy + d, cx, 255, 40, 40);
        }
      }

      char name[64];
      std::snprintf(name, sizeof(name), "img%04zu_char%02zu.ppm", i, j);
      const fs::path file = dir / name;
      write_ppm(canvas, file.string());
      res.files.push_back(file.string());
      ++res.chars;
    }
    ++res.images;
  }

  json j;
  j["images"] = res.images;
  j["chars"] = res.chars;
  j["k_landmarks"] = k;
  write_text(fs::path(out_dir) / "visualize.json", j.dump(2) + "\n");
  return res;
}

}  // namespace gspot::runner
