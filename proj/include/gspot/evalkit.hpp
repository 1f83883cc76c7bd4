#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "gspot/geometry.hpp"
#include "gspot/glyphgen.hpp"

// Metrics: Levenshtein distance, the 1-NED recognition score, detection
// precision/recall/F, and the A/B font-generalization report. Pure functions
// over records; the model never enters this layer.
namespace gspot::evalkit {

struct EvalLine {
  Quad box;
  std::string text;
  bool ignore = false;  // ground truth only
};

struct EvalRecord {
  std::vector<EvalLine> pred;
  std::vector<EvalLine> gt;
  glyphgen::Difficulty difficulty = glyphgen::Difficulty::Simple;
};

// Minimal insert/delete/substitute count, unit costs.
int levenshtein(const std::string& a, const std::string& b);

// Greedy one-to-one matching by descending IOU (>= threshold); ties broken by
// larger prediction area, then by index, so counts never depend on input
// order.
struct MatchResult {
  std::vector<std::pair<int, int>> pairs;  // (pred index, gt index)
  std::vector<int> unmatched_pred;
  std::vector<int> unmatched_gt;
};
MatchResult match_boxes(const std::vector<Quad>& pred, const std::vector<Quad>& gt,
                        double iou_threshold = 0.5);

// 1 - mean_i L(T_i, T_hat_i) / max(|T_i|, |T_hat_i|) over matched line pairs,
// plus full-length penalties for unmatched lines on either side. A pair of
// empty strings contributes ratio 0; ignore-flagged ground truth drops out of
// both directions. No lines anywhere scores a clean 1.
double one_minus_ned(const std::vector<EvalRecord>& records, double iou_threshold = 0.5);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

// Single-image primitive; ignore-flagged boxes leave recall's denominator and
// their matched predictions leave precision's. Zero denominators score 0.
Prf detection_prf(const std::vector<Quad>& pred, const std::vector<Quad>& gt,
                  const std::vector<bool>& gt_ignore, double iou_threshold = 0.5);
// Aggregate over records (counts summed before the ratios).
Prf detection_prf(const std::vector<EvalRecord>& records, double iou_threshold = 0.5);

struct SetMetrics {
  double one_minus_ned = 0.0;
  double precision = 0.0, recall = 0.0, f = 0.0;
  int fully_recognized = 0;  // images whose every non-ignored line is exact
  int images = 0;
};

struct GeneralizationReport {
  SetMetrics set_a, set_b;
  double gap = 0.0;          // 1-NED(A) - 1-NED(B)
  int a_right_b_wrong = 0;   // fully recognized with A styles, missed with B
  std::array<int, 3> b_wrong_by_difficulty{};  // those pairs, by B-style tier
};

// records_a[i] and records_b[i] must describe the same scene rendered with
// the two style sets; the difficulty tag of the B record feeds the breakdown.
GeneralizationReport font_generalization_report(const std::vector<EvalRecord>& records_a,
                                                const std::vector<EvalRecord>& records_b,
                                                double iou_threshold = 0.5);

std::string report_json(const GeneralizationReport& r);
std::string report_markdown(const GeneralizationReport& r);

}  // namespace gspot::evalkit
