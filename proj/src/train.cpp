#include "gspot/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

#include "gspot/gpm.hpp"

namespace fs = std::filesystem;

namespace gspot::train {

namespace {

// stream ids for derived seeds
constexpr uint64_t kInitStream = 0x1417;
constexpr uint64_t kClsReinitStream = 0x57A6;
constexpr uint64_t kProposalStream = 0x9205;
constexpr uint64_t kShuffleStream = 0x5FFE;
constexpr uint64_t kGpmStream = 0x69A1;
constexpr uint64_t kEvalStream = 0xE7A1;

std::vector<int> to_int_vec(const std::vector<int64_t>& v) {
  std::vector<int> out;
  out.reserve(v.size());
  for (int64_t x : v) out.push_back(static_cast<int>(x));
  return out;
}

std::vector<size_t> shuffled_indices(size_t n, uint64_t seed) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  Rng rng(seed);
  for (size_t i = n; i > 1; --i)
    std::swap(idx[i - 1], idx[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(i)))]);
  return idx;
}

double stage_lr(const TrainConfig& cfg, int epoch) {  // epoch is 1-based
  double lr = cfg.lr;
  for (int d : cfg.decay_epochs)
    if (epoch >= d) lr /= 10.0;
  return lr;
}

}  // namespace

void TrainConfig::validate() const {
  if (stages != std::vector<int>{1, 2, 3})
    throw std::invalid_argument("train config: stages must be 1,2,3 in order");
  if (stage_epochs.size() != 3)
    throw std::invalid_argument("train config: stage_epochs needs one entry per stage");
  for (int e : stage_epochs)
    if (e < 0) throw std::invalid_argument("train config: negative epoch count");
  if (lambda < 0) throw std::invalid_argument("train config: lambda must be >= 0");
  if (lr <= 0) throw std::invalid_argument("train config: lr must be positive");
  if (losses != "both" && losses != "align-only" && losses != "div-only" && losses != "gpm-off")
    throw std::invalid_argument("train config: unknown losses mode: " + losses);
  if (jitter < 0) throw std::invalid_argument("train config: negative jitter");
  ranges.validate();
  spotter::fusion_from_name(spotter::fusion_name(model.fusion));  // enum sanity
}

TrainConfig TrainConfig::from_config(const Config& c) {
  TrainConfig t;
  t.model.alphabet_size = static_cast<int>(c.get_int("alphabet_size", t.model.alphabet_size));
  t.model.k_landmarks = static_cast<int>(c.get_int("K", t.model.k_landmarks));
  t.model.d = static_cast<int>(c.get_int("D", t.model.d));
  t.model.c1 = static_cast<int>(c.get_int("c1", t.model.c1));
  t.model.c2 = static_cast<int>(c.get_int("c2", t.model.c2));
  t.model.gpm_width = static_cast<int>(c.get_int("gpm_width", t.model.gpm_width));
  t.model.roi_char = static_cast<int>(c.get_int("roi_char", t.model.roi_char));
  t.model.roi_gpm = static_cast<int>(c.get_int("roi_gpm", t.model.roi_gpm));
  t.model.crb_hidden = static_cast<int>(c.get_int("crb_hidden", t.model.crb_hidden));
  t.model.tdb_hidden = static_cast<int>(c.get_int("tdb_hidden", t.model.tdb_hidden));
  t.model.fusion = spotter::fusion_from_name(c.get_str("fusion", "graph"));
  t.model.assemble_iou = c.get_real("assemble_iou", t.model.assemble_iou);
  t.model.score_threshold = c.get_real("score_threshold", t.model.score_threshold);

  t.stages = to_int_vec(c.get_int_list("stages", {1, 2, 3}));
  t.stage_epochs = to_int_vec(c.get_int_list("stage_epochs", {2, 2, 2}));
  t.lr = c.get_real("lr", t.lr);
  t.decay_epochs = to_int_vec(c.get_int_list("decay_epochs", {}));
  t.momentum = c.get_real("momentum", t.momentum);
  t.weight_decay = c.get_real("weight_decay", t.weight_decay);
  t.grad_clip = c.get_real("grad_clip", t.grad_clip);

  t.lambda = c.get_real("lambda", t.lambda);
  t.losses = c.get_str("losses", t.losses);
  t.ranges.rot_lo = c.get_real("rot_lo", t.ranges.rot_lo);
  t.ranges.rot_hi = c.get_real("rot_hi", t.ranges.rot_hi);
  t.ranges.trans_lo = c.get_real("trans_lo", t.ranges.trans_lo);
  t.ranges.trans_hi = c.get_real("trans_hi", t.ranges.trans_hi);
  t.ranges.scale_lo = c.get_real("scale_lo", t.ranges.scale_lo);
  t.ranges.scale_hi = c.get_real("scale_hi", t.ranges.scale_hi);
  t.jitter = c.get_real("jitter", t.jitter);
  t.iou_threshold = c.get_real("iou_threshold", t.iou_threshold);
  t.seed = static_cast<uint64_t>(c.get_int("seed", static_cast<int64_t>(t.seed)));

  t.max_train_images = static_cast<int>(c.get_int("max_train_images", t.max_train_images));
  t.stage2_patches = static_cast<int>(c.get_int("stage2_patches", t.stage2_patches));
  t.stage3_images = static_cast<int>(c.get_int("stage3_images", t.stage3_images));
  t.eval_images = static_cast<int>(c.get_int("eval_images", t.eval_images));
  t.validate();
  return t;
}

std::string record_json(const EpochRecord& r) {
  nlohmann::json j;
  j["stage"] = r.stage;
  j["epoch"] = r.epoch;
  j["split"] = r.split;
  j["lr"] = r.lr;
  j["loss"] = r.loss;
  j["crb_cls"] = r.crb_cls;
  j["crb_box"] = r.crb_box;
  j["tdb_cls"] = r.tdb_cls;
  j["tdb_box"] = r.tdb_box;
  j["align"] = r.align;
  j["div"] = r.div;
  j["1-NED"] = r.one_minus_ned;
  j["P"] = r.precision;
  j["R"] = r.recall;
  j["F"] = r.f;
  return j.dump();
}

std::vector<evalkit::EvalRecord> evaluate_model(spotter::Spotter& model,
                                                const std::vector<glyphgen::GlyphSample>& samples,
                                                const EvalOptions& opt) {
  size_t n = samples.size();
  if (opt.max_images > 0) n = std::min(n, static_cast<size_t>(opt.max_images));
  std::vector<evalkit::EvalRecord> records;
  records.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    const glyphgen::GlyphSample& s = samples[i];
    Rng rng(Rng::mix(opt.seed, i));
    std::vector<spotter::Proposal> cprops, lprops;
    for (const auto& ca : s.chars)
      cprops.push_back({spotter::jitter_box(ca.points, opt.jitter, rng),
                        spotter::ProposalKind::Character,
                        spotter::ProposalSource::GroundTruthJittered});
    for (const auto& ln : s.text_lines)
      lprops.push_back({spotter::jitter_box(ln.points, opt.jitter, rng),
                        spotter::ProposalKind::TextLine,
                        spotter::ProposalSource::GroundTruthJittered});
    auto preds = spotter::spot_image(model, spotter::image_tensor(s.image), lprops, cprops);
    evalkit::EvalRecord rec;
    for (const auto& p : preds) rec.pred.push_back({p.text_box, p.text, false});
    for (const auto& ln : s.text_lines) rec.gt.push_back({ln.points, ln.text, ln.ignore});
    rec.difficulty = s.difficulty;
    records.push_back(std::move(rec));
  }
  return records;
}

spotter::Spotter make_model(const TrainConfig& cfg) {
  Rng rng(Rng::mix(cfg.seed, kInitStream));
  spotter::Spotter model;
  model.init(cfg.model, rng);
  return model;
}

void store_model(Checkpoint& ckpt, spotter::Spotter& model) {
  store_params(ckpt, model.params());
  store_params(ckpt, model.norm_state());
  const spotter::SpotterConfig& m = model.cfg;
  Tensor meta({13});
  meta.at(0) = m.alphabet_size;
  meta.at(1) = m.k_landmarks;
  meta.at(2) = m.d;
  meta.at(3) = m.c1;
  meta.at(4) = m.c2;
  meta.at(5) = m.gpm_width;
  meta.at(6) = m.roi_char;
  meta.at(7) = m.roi_gpm;
  meta.at(8) = m.crb_hidden;
  meta.at(9) = m.tdb_hidden;
  meta.at(10) = static_cast<int>(m.fusion);
  meta.at(11) = m.assemble_iou;
  meta.at(12) = m.score_threshold;
  ckpt.put("meta.model", meta);
}

void load_model(const Checkpoint& ckpt, spotter::Spotter& model) {
  load_params(ckpt, model.params());
  load_params(ckpt, model.norm_state());
}

spotter::SpotterConfig config_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.has("meta.model"))
    throw std::runtime_error("checkpoint has no model-shape record (meta.model)");
  const Tensor& meta = ckpt.get("meta.model");
  if (meta.numel() != 13)
    throw std::runtime_error("checkpoint meta.model has unexpected size " +
                             std::to_string(meta.numel()));
  spotter::SpotterConfig m;
  m.alphabet_size = static_cast<int>(meta[0]);
  m.k_landmarks = static_cast<int>(meta[1]);
  m.d = static_cast<int>(meta[2]);
  m.c1 = static_cast<int>(meta[3]);
  m.c2 = static_cast<int>(meta[4]);
  m.gpm_width = static_cast<int>(meta[5]);
  m.roi_char = static_cast<int>(meta[6]);
  m.roi_gpm = static_cast<int>(meta[7]);
  m.crb_hidden = static_cast<int>(meta[8]);
  m.tdb_hidden = static_cast<int>(meta[9]);
  m.fusion = static_cast<spotter::Fusion>(static_cast<int>(meta[10]));
  m.assemble_iou = meta[11];
  m.score_threshold = meta[12];
  return m;
}

spotter::Spotter model_from_checkpoint(const Checkpoint& ckpt) {
  Rng rng(0);
  spotter::Spotter model;
  model.init(config_from_checkpoint(ckpt), rng);
  load_model(ckpt, model);
  return model;
}

namespace {

// supervised step on one image: both branches, teacher-forced proposals
spotter::LossReport supervised_step(spotter::Spotter& model, const glyphgen::GlyphSample& s,
                                    double jitter, uint64_t prop_seed, nn::Sgd& opt,
                                    const std::vector<nn::ParamRef>& trained,
                                    const std::vector<nn::ParamRef>& all, double grad_clip,
                                    int stage, int64_t step) {
  nn::Sgd::zero_grads(all);
  Rng prop_rng(prop_seed);
  const Tensor img = spotter::image_tensor(s.image);
  spotter::Backbone::Cache bc;
  const Tensor feats = model.backbone.forward(img, bc);

  auto cprops =
      spotter::make_char_proposals(s.chars, s.image.width, s.image.height, jitter, prop_rng);
  auto lprops = spotter::make_line_proposals(s.text_lines, s.image.width, s.image.height, jitter,
                                             prop_rng);

  std::vector<spotter::Spotter::CharCache> ccache(cprops.size());
  std::vector<spotter::LossItem> citems(cprops.size());
  for (size_t i = 0; i < cprops.size(); ++i) {
    auto [logits, deltas] = model.recognize_character(feats, cprops[i].p.box, ccache[i]);
    citems[i].logits = std::move(logits);
    if (cprops[i].gt_index >= 0) {
      const auto& ca = s.chars[static_cast<size_t>(cprops[i].gt_index)];
      const int cls = glyphgen::symbol_class(ca.ch);
      if (cls < 0 || cls >= model.cfg.alphabet_size)
        throw std::runtime_error("train: character '" + ca.ch + "' outside the alphabet");
      citems[i].label = cls;
      citems[i].deltas = std::move(deltas);
      citems[i].targets = spotter::box_deltas(cprops[i].p.box, ca.points);
    } else {
      citems[i].label = model.cfg.background_class();
    }
  }

  std::vector<spotter::Spotter::LineCache> lcache(lprops.size());
  std::vector<spotter::LossItem> litems(lprops.size());
  for (size_t i = 0; i < lprops.size(); ++i) {
    auto [logits, deltas] = model.classify_line(feats, lprops[i].p.box, lcache[i]);
    litems[i].logits = std::move(logits);
    litems[i].label = lprops[i].gt_index >= 0 ? 1 : 0;
    if (lprops[i].gt_index >= 0) {
      litems[i].deltas = std::move(deltas);
      litems[i].targets = spotter::box_deltas(
          lprops[i].p.box, s.text_lines[static_cast<size_t>(lprops[i].gt_index)].points);
    }
  }

  spotter::LossGrads grads;
  spotter::LossReport rep = spotter::spotting_loss(citems, litems, &grads);
  if (!std::isfinite(rep.total))
    throw std::runtime_error("train: non-finite loss at stage " + std::to_string(stage) +
                             " step " + std::to_string(step));

  Tensor dfeat(feats.shape());
  for (size_t i = 0; i < cprops.size(); ++i)
    model.recognize_character_backward(feats, grads.crb_dlogits[i], grads.crb_ddeltas[i],
                                       ccache[i], &dfeat);
  for (size_t i = 0; i < lprops.size(); ++i)
    model.classify_line_backward(feats, grads.tdb_dlogits[i], grads.tdb_ddeltas[i], lcache[i],
                                 &dfeat);
  model.backbone.backward(dfeat, bc);
  nn::Sgd::clip_grad_norm(trained, grad_clip);
  opt.step(trained);
  return rep;
}

struct EvalSummary {
  double ned = 0.0, p = 0.0, r = 0.0, f = 0.0;
};

EvalSummary eval_summary(spotter::Spotter& model,
                         const std::vector<glyphgen::GlyphSample>& samples,
                         const TrainConfig& cfg) {
  EvalOptions opt;
  opt.jitter = std::min(cfg.jitter, 0.05);
  opt.iou_threshold = cfg.iou_threshold;
  opt.seed = Rng::mix(cfg.seed, kEvalStream);
  opt.max_images = cfg.eval_images;
  auto records = evaluate_model(model, samples, opt);
  EvalSummary s;
  s.ned = evalkit::one_minus_ned(records, opt.iou_threshold);
  const evalkit::Prf prf = evalkit::detection_prf(records, opt.iou_threshold);
  s.p = prf.precision;
  s.r = prf.recall;
  s.f = prf.f;
  return s;
}

}  // namespace

TrainResult train_three_stage(const TrainConfig& cfg,
                              const std::vector<glyphgen::GlyphSample>& train_set,
                              const std::vector<glyphgen::GlyphSample>& val_set,
                              const std::string& out_dir) {
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  fs::create_directories(out_dir);

  std::vector<glyphgen::GlyphSample> const* train = &train_set;
  std::vector<glyphgen::GlyphSample> capped;
  if (cfg.max_train_images > 0 &&
      train_set.size() > static_cast<size_t>(cfg.max_train_images)) {
    capped.assign(train_set.begin(), train_set.begin() + cfg.max_train_images);
    train = &capped;
  }
  const size_t n_train = train->size();

  spotter::Spotter model = make_model(cfg);
  model.set_fusion_active(false);  // stages 1-2: landmark path out of the loss
  const bool gpm_off = cfg.losses == "gpm-off" || cfg.model.fusion == spotter::Fusion::Off;

  std::ofstream log(fs::path(out_dir) / "metrics.jsonl");
  if (!log) throw std::runtime_error("train: cannot open metric log in " + out_dir);
  TrainResult result;
  result.metric_log = (fs::path(out_dir) / "metrics.jsonl").string();
  bool first_record = true;

  auto log_epoch = [&](EpochRecord r) {
    const EvalSummary ev = eval_summary(model, *train, cfg);
    r.one_minus_ned = ev.ned;
    r.precision = ev.p;
    r.recall = ev.r;
    r.f = ev.f;
    log << record_json(r) << "\n";
    log.flush();
    if (first_record) {
      result.first_train_ned = ev.ned;
      first_record = false;
    }
    result.final_train_ned = ev.ned;
  };

  auto save_stage = [&](int stage) {
    Checkpoint ckpt;
    store_model(ckpt, model);
    const std::string path = (fs::path(out_dir) / ("stage" + std::to_string(stage) + ".ckpt")).string();
    ckpt.save(path);
    return path;
  };

  // trained parameter groups
  std::vector<nn::ParamRef> all = model.params();
  auto heads_and_backbone = [&]() {
    std::vector<nn::ParamRef> out = model.backbone_params();
    auto c = model.crb_params();
    out.insert(out.end(), c.begin(), c.end());
    auto t = model.tdb_params();
    out.insert(out.end(), t.begin(), t.end());
    return out;
  };

  // ---- stage 1: backbone + heads, fusion inactive --------------------------
  {
    nn::Sgd opt(cfg.lr, cfg.momentum, cfg.weight_decay);
    const std::vector<nn::ParamRef> trained = heads_and_backbone();
    int64_t step = 0;
    for (int epoch = 1; epoch <= cfg.stage_epochs[0]; ++epoch) {
      opt.lr = stage_lr(cfg, epoch);
      EpochRecord rec;
      rec.stage = 1;
      rec.epoch = epoch;
      rec.lr = opt.lr;
      double total = 0, ccls = 0, cbox = 0, tcls = 0, tbox = 0;
      const auto order = shuffled_indices(n_train, Rng::mix(cfg.seed, kShuffleStream,
                                                            static_cast<uint64_t>(epoch)));
      for (size_t oi : order) {
        const auto rep = supervised_step(
            model, (*train)[oi], cfg.jitter,
            Rng::mix(cfg.seed, kProposalStream, static_cast<uint64_t>(step)), opt, trained, all,
            cfg.grad_clip, 1, step);
        total += rep.total;
        ccls += rep.crb_cls;
        cbox += rep.crb_box;
        tcls += rep.tdb_cls;
        tbox += rep.tdb_box;
        ++step;
      }
      const double n = static_cast<double>(n_train);
      rec.loss = total / n;
      rec.crb_cls = ccls / n;
      rec.crb_box = cbox / n;
      rec.tdb_cls = tcls / n;
      rec.tdb_box = tbox / n;
      log_epoch(rec);
    }
  }
  result.stage1_ckpt = save_stage(1);
  const uint64_t cls_after_s1 = params_hash(model.cls_layer_params());

  // ---- stage 2: landmark net alone on character patches --------------------
  {
    const uint64_t backbone_before = params_hash(model.backbone_params());
    const uint64_t crb_before = params_hash(model.crb_params());
    const uint64_t tdb_before = params_hash(model.tdb_params());
    const uint64_t gpm_before = gpm_off ? 0 : params_hash(model.gpm_params());

    if (!gpm_off) {
      const double align_w = cfg.losses == "div-only" ? 0.0 : 1.0;
      const double lambda = cfg.losses == "align-only" ? 0.0 : cfg.lambda;
      nn::Sgd opt(cfg.lr, cfg.momentum, cfg.weight_decay);
      const std::vector<nn::ParamRef> trained = model.gpm_params();
      int64_t step = 0;
      for (int epoch = 1; epoch <= cfg.stage_epochs[1]; ++epoch) {
        // re-asserted per epoch: the end-of-epoch evaluation restores the
        // model-wide mode, and patch extraction wants fixed statistics
        model.backbone.set_eval(true);
        opt.lr = stage_lr(cfg, epoch);
        EpochRecord rec;
        rec.stage = 2;
        rec.epoch = epoch;
        rec.lr = opt.lr;
        double align_acc = 0, div_acc = 0, loss_acc = 0;
        int64_t epoch_steps = 0;
        const auto order = shuffled_indices(
            n_train, Rng::mix(cfg.seed, kShuffleStream, 0x200 + static_cast<uint64_t>(epoch)));
        for (size_t oi : order) {
          if (epoch_steps >= cfg.stage2_patches) break;
          const glyphgen::GlyphSample& s = (*train)[oi];
          if (s.chars.empty()) continue;
          spotter::Backbone::Cache bc;
          const Tensor feats = model.backbone.forward(spotter::image_tensor(s.image), bc);
          for (const auto& ca : s.chars) {
            if (epoch_steps >= cfg.stage2_patches) break;
            const Tensor patch = spotter::extract_roi(feats, ca.points, cfg.model.roi_gpm,
                                                      spotter::Backbone::kStride);
            nn::Sgd::zero_grads(trained);
            gpm::GpmStepResult res;
            try {
              res = gpm::gpm_train_step(patch, model.gpm_net, cfg.ranges, lambda,
                                        Rng::mix(cfg.seed, kGpmStream,
                                                 static_cast<uint64_t>(step)),
                                        align_w);
            } catch (const std::exception& e) {
              throw std::runtime_error("train: stage 2 step " + std::to_string(step) + ": " +
                                       e.what());
            }
            nn::Sgd::clip_grad_norm(trained, cfg.grad_clip);
            opt.step(trained);
            align_acc += res.align;
            div_acc += res.div;
            loss_acc += res.loss;
            ++step;
            ++epoch_steps;
          }
        }
        if (epoch_steps > 0) {
          rec.align = align_acc / static_cast<double>(epoch_steps);
          rec.div = div_acc / static_cast<double>(epoch_steps);
          rec.loss = loss_acc / static_cast<double>(epoch_steps);
        }
        log_epoch(rec);
      }
      model.backbone.set_eval(false);

      if (params_hash(model.gpm_params()) == gpm_before && step > 0)
        throw std::runtime_error("train: stage 2 ran but landmark parameters did not change");
    }

    if (params_hash(model.backbone_params()) != backbone_before ||
        params_hash(model.crb_params()) != crb_before ||
        params_hash(model.tdb_params()) != tdb_before)
      throw std::runtime_error("train: freeze contract broken in stage 2");
  }
  result.stage2_ckpt = save_stage(2);
  const uint64_t gpm_after_s2 = gpm_off ? 0 : params_hash(model.gpm_params());

  // ---- stage 3: freeze landmarks, re-init classifier, finetune the rest ----
  {
    if (!gpm_off) model.set_fusion_active(true);
    model.set_gpm_frozen(true);
    Rng reinit_rng(Rng::mix(cfg.seed, kClsReinitStream));
    model.reinit_cls_layer(reinit_rng);
    if (params_hash(model.cls_layer_params()) == cls_after_s1)
      throw std::runtime_error("train: classification layer unchanged by re-initialization");

    nn::Sgd opt(cfg.lr, cfg.momentum, cfg.weight_decay);
    std::vector<nn::ParamRef> trained = heads_and_backbone();
    if (!gpm_off) {
      // the fusion block only sees gradients once the landmark path is live
      auto g = model.grm_params();
      trained.insert(trained.end(), g.begin(), g.end());
    }
    int64_t step = 0;
    for (int epoch = 1; epoch <= cfg.stage_epochs[2]; ++epoch) {
      opt.lr = stage_lr(cfg, epoch);
      EpochRecord rec;
      rec.stage = 3;
      rec.epoch = epoch;
      rec.lr = opt.lr;
      double total = 0, ccls = 0, cbox = 0, tcls = 0, tbox = 0;
      auto order = shuffled_indices(
          n_train, Rng::mix(cfg.seed, kShuffleStream, 0x300 + static_cast<uint64_t>(epoch)));
      if (cfg.stage3_images > 0 && order.size() > static_cast<size_t>(cfg.stage3_images))
        order.resize(static_cast<size_t>(cfg.stage3_images));
      for (size_t oi : order) {
        const auto rep = supervised_step(
            model, (*train)[oi], cfg.jitter,
            Rng::mix(cfg.seed, kProposalStream, 0x30000000ULL + static_cast<uint64_t>(step)),
            opt, trained, all, cfg.grad_clip, 3, step);
        total += rep.total;
        ccls += rep.crb_cls;
        cbox += rep.crb_box;
        tcls += rep.tdb_cls;
        tbox += rep.tdb_box;
        ++step;
      }
      const double n = static_cast<double>(order.size());
      if (!order.empty()) {
        rec.loss = total / n;
        rec.crb_cls = ccls / n;
        rec.crb_box = cbox / n;
        rec.tdb_cls = tcls / n;
        rec.tdb_box = tbox / n;
      }
      log_epoch(rec);
    }

    if (!gpm_off && params_hash(model.gpm_params()) != gpm_after_s2)
      throw std::runtime_error("train: frozen landmark parameters changed in stage 3");
  }
  result.stage3_ckpt = save_stage(3);

  // final validation record
  if (!val_set.empty()) {
    EvalOptions opt;
    opt.jitter = std::min(cfg.jitter, 0.05);
    opt.iou_threshold = cfg.iou_threshold;
    opt.seed = Rng::mix(cfg.seed, kEvalStream, 2);
    opt.max_images = cfg.eval_images;
    auto records = evaluate_model(model, val_set, opt);
    EpochRecord rec;
    rec.stage = 3;
    rec.epoch = cfg.stage_epochs[2];
    rec.split = "val";
    rec.lr = 0.0;
    rec.one_minus_ned = evalkit::one_minus_ned(records, opt.iou_threshold);
    const auto prf = evalkit::detection_prf(records, opt.iou_threshold);
    rec.precision = prf.precision;
    rec.recall = prf.recall;
    rec.f = prf.f;
    log << record_json(rec) << "\n";
    result.val_ned = rec.one_minus_ned;
  }
  return result;
}

}  // namespace gspot::train
