#include "gspot/evalkit.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "json.hpp"

using nlohmann::json;

namespace gspot::evalkit {

namespace {

struct PrfCounts {
  int tp = 0;
  int p_den = 0;  // predictions not absorbed by ignore-flagged ground truth
  int r_den = 0;  // non-ignored ground-truth boxes
};

PrfCounts prf_counts(const std::vector<Quad>& pred, const std::vector<Quad>& gt,
                     const std::vector<bool>& gt_ignore, double iou_threshold) {
  const MatchResult m = match_boxes(pred, gt, iou_threshold);
  PrfCounts c;
  int absorbed = 0;
  for (const auto& [pi, gi] : m.pairs) {
    if (gt_ignore[static_cast<size_t>(gi)])
      ++absorbed;
    else
      ++c.tp;
  }
  c.p_den = static_cast<int>(pred.size()) - absorbed;
  for (bool ig : gt_ignore)
    if (!ig) ++c.r_den;
  return c;
}

Prf prf_from_counts(const PrfCounts& c) {
  Prf out;
  out.precision = c.p_den > 0 ? static_cast<double>(c.tp) / c.p_den : 0.0;
  out.recall = c.r_den > 0 ? static_cast<double>(c.tp) / c.r_den : 0.0;
  out.f = out.precision + out.recall > 0
              ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
              : 0.0;
  return out;
}

std::vector<Quad> boxes_of(const std::vector<EvalLine>& lines) {
  std::vector<Quad> out;
  out.reserve(lines.size());
  for (const EvalLine& l : lines) out.push_back(l.box);
  return out;
}

double pair_ratio(const std::string& pred, const std::string& gt) {
  const size_t mx = std::max(pred.size(), gt.size());
  if (mx == 0) return 0.0;  // both empty: defined as zero distance
  return static_cast<double>(levenshtein(pred, gt)) / static_cast<double>(mx);
}

// every non-ignored ground-truth line matched and read exactly
bool fully_recognized(const EvalRecord& rec, double iou_threshold) {
  const MatchResult m = match_boxes(boxes_of(rec.pred), boxes_of(rec.gt), iou_threshold);
  std::vector<int> match_of_gt(rec.gt.size(), -1);
  for (const auto& [pi, gi] : m.pairs) match_of_gt[static_cast<size_t>(gi)] = pi;
  for (size_t gi = 0; gi < rec.gt.size(); ++gi) {
    if (rec.gt[gi].ignore) continue;
    const int pi = match_of_gt[gi];
    if (pi < 0 || rec.pred[static_cast<size_t>(pi)].text != rec.gt[gi].text) return false;
  }
  return true;
}

SetMetrics set_metrics(const std::vector<EvalRecord>& records, double iou_threshold) {
  SetMetrics s;
  s.images = static_cast<int>(records.size());
  s.one_minus_ned = one_minus_ned(records, iou_threshold);
  const Prf prf = detection_prf(records, iou_threshold);
  s.precision = prf.precision;
  s.recall = prf.recall;
  s.f = prf.f;
  for (const EvalRecord& r : records)
    if (fully_recognized(r, iou_threshold)) ++s.fully_recognized;
  return s;
}

json set_json(const SetMetrics& s) {
  return json{{"1-NED", s.one_minus_ned}, {"P", s.precision},          {"R", s.recall},
              {"F", s.f},                 {"fully_recognized", s.fully_recognized},
              {"images", s.images}};
}

}  // namespace

int levenshtein(const std::string& a, const std::string& b) {
  const size_t n = b.size();
  std::vector<int> prev(n + 1), cur(n + 1);
  for (size_t j = 0; j <= n; ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= n; ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

MatchResult match_boxes(const std::vector<Quad>& pred, const std::vector<Quad>& gt,
                        double iou_threshold) {
  struct Cand {
    double iou;
    double area;
    int pi, gi;
  };
  std::vector<Cand> cands;
  for (int pi = 0; pi < static_cast<int>(pred.size()); ++pi)
    for (int gi = 0; gi < static_cast<int>(gt.size()); ++gi) {
      const double iou = quad_iou(pred[static_cast<size_t>(pi)], gt[static_cast<size_t>(gi)]);
      if (iou >= iou_threshold)
        cands.push_back({iou, quad_area(pred[static_cast<size_t>(pi)]), pi, gi});
    }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.area != b.area) return a.area > b.area;
    if (a.pi != b.pi) return a.pi < b.pi;
    return a.gi < b.gi;
  });

  MatchResult out;
  std::vector<char> pred_used(pred.size(), 0), gt_used(gt.size(), 0);
  for (const Cand& c : cands) {
    if (pred_used[static_cast<size_t>(c.pi)] || gt_used[static_cast<size_t>(c.gi)]) continue;
    pred_used[static_cast<size_t>(c.pi)] = 1;
    gt_used[static_cast<size_t>(c.gi)] = 1;
    out.pairs.emplace_back(c.pi, c.gi);
  }
  for (int pi = 0; pi < static_cast<int>(pred.size()); ++pi)
    if (!pred_used[static_cast<size_t>(pi)]) out.unmatched_pred.push_back(pi);
  for (int gi = 0; gi < static_cast<int>(gt.size()); ++gi)
    if (!gt_used[static_cast<size_t>(gi)]) out.unmatched_gt.push_back(gi);
  return out;
}

double one_minus_ned(const std::vector<EvalRecord>& records, double iou_threshold) {
  double total = 0.0;
  int64_t n = 0;
  for (const EvalRecord& rec : records) {
    const MatchResult m = match_boxes(boxes_of(rec.pred), boxes_of(rec.gt), iou_threshold);
    for (const auto& [pi, gi] : m.pairs) {
      if (rec.gt[static_cast<size_t>(gi)].ignore) continue;  // absorbed, both directions
      total += pair_ratio(rec.pred[static_cast<size_t>(pi)].text,
                          rec.gt[static_cast<size_t>(gi)].text);
      ++n;
    }
    for (int gi : m.unmatched_gt) {
      if (rec.gt[static_cast<size_t>(gi)].ignore) continue;
      total += pair_ratio("", rec.gt[static_cast<size_t>(gi)].text);
      ++n;
    }
    for (int pi : m.unmatched_pred) {
      total += pair_ratio(rec.pred[static_cast<size_t>(pi)].text, "");
      ++n;
    }
  }
  if (n == 0) return 1.0;
  return 1.0 - total / static_cast<double>(n);
}

Prf detection_prf(const std::vector<Quad>& pred, const std::vector<Quad>& gt,
                  const std::vector<bool>& gt_ignore, double iou_threshold) {
  if (gt.size() != gt_ignore.size())
    throw std::invalid_argument("detection_prf: ignore flags must align with ground truth");
  return prf_from_counts(prf_counts(pred, gt, gt_ignore, iou_threshold));
}

Prf detection_prf(const std::vector<EvalRecord>& records, double iou_threshold) {
  PrfCounts acc;
  for (const EvalRecord& rec : records) {
    std::vector<bool> ignore;
    ignore.reserve(rec.gt.size());
    for (const EvalLine& l : rec.gt) ignore.push_back(l.ignore);
    const PrfCounts c = prf_counts(boxes_of(rec.pred), boxes_of(rec.gt), ignore, iou_threshold);
    acc.tp += c.tp;
    acc.p_den += c.p_den;
    acc.r_den += c.r_den;
  }
  return prf_from_counts(acc);
}

GeneralizationReport font_generalization_report(const std::vector<EvalRecord>& records_a,
                                                const std::vector<EvalRecord>& records_b,
                                                double iou_threshold) {
  if (records_a.size() != records_b.size())
    throw std::invalid_argument("font_generalization_report: A and B sets must pair by index (" +
                                std::to_string(records_a.size()) + " vs " +
                                std::to_string(records_b.size()) + ")");
  GeneralizationReport r;
  r.set_a = set_metrics(records_a, iou_threshold);
  r.set_b = set_metrics(records_b, iou_threshold);
  r.gap = r.set_a.one_minus_ned - r.set_b.one_minus_ned;
  for (size_t i = 0; i < records_a.size(); ++i) {
    const bool a_right = fully_recognized(records_a[i], iou_threshold);
    const bool b_right = fully_recognized(records_b[i], iou_threshold);
    if (a_right && !b_right) {
      ++r.a_right_b_wrong;
      ++r.b_wrong_by_difficulty[static_cast<size_t>(records_b[i].difficulty)];
    }
  }
  return r;
}

std::string report_json(const GeneralizationReport& r) {
  json j;
  j["set_a"] = set_json(r.set_a);
  j["set_b"] = set_json(r.set_b);
  j["gap"] = r.gap;
  j["a_right_b_wrong"] = r.a_right_b_wrong;
  j["b_wrong_by_difficulty"] = {{"simple", r.b_wrong_by_difficulty[0]},
                                {"medium", r.b_wrong_by_difficulty[1]},
                                {"hard", r.b_wrong_by_difficulty[2]}};
  return j.dump(2);
}

std::string report_markdown(const GeneralizationReport& r) {
  char buf[256];
  std::string out;
  out += "| set | 1-NED | P | R | F | fully recognized |\n";
  out += "|-----|-------|---|---|---|------------------|\n";
  std::snprintf(buf, sizeof(buf), "| A | %.4f | %.4f | %.4f | %.4f | %d / %d |\n",
                r.set_a.one_minus_ned, r.set_a.precision, r.set_a.recall, r.set_a.f,
                r.set_a.fully_recognized, r.set_a.images);
  out += buf;
  std::snprintf(buf, sizeof(buf), "| B | %.4f | %.4f | %.4f | %.4f | %d / %d |\n",
                r.set_b.one_minus_ned, r.set_b.precision, r.set_b.recall, r.set_b.f,
                r.set_b.fully_recognized, r.set_b.images);
  out += buf;
  std::snprintf(buf, sizeof(buf),
                "\n1-NED gap (A - B): %.4f\nA-right / B-wrong: %d (simple %d, medium %d, hard "
                "%d)\n",
                r.gap, r.a_right_b_wrong, r.b_wrong_by_difficulty[0], r.b_wrong_by_difficulty[1],
                r.b_wrong_by_difficulty[2]);
  out += buf;
  return out;
}

}  // namespace gspot::evalkit
