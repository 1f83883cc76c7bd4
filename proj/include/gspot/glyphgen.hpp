#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gspot/geometry.hpp"
#include "gspot/image.hpp"

namespace gspot::glyphgen {

enum class Difficulty { Simple, Medium, Hard };

const char* difficulty_name(Difficulty d);
Difficulty difficulty_from_name(const std::string& name);  // throws on unknown

// Thresholds operationalizing the tiering: decoration drives "hard",
// both knobs near zero is "simple".
Difficulty difficulty_of(double curvature_jitter, double decoration_level);

struct StyleParams {
  int style_id = 0;
  double stroke_width = 2.0;      // px, [1, 6]
  double slant = 0.0;             // shear factor, [-0.4, 0.4]
  double curvature_jitter = 0.0;  // [0, 1]
  double decoration_level = 0.0;  // [0, 1]
  Difficulty difficulty = Difficulty::Simple;

  static StyleParams make(int id, double stroke_width, double slant,
                          double curvature_jitter, double decoration_level);
  void validate() const;
};

struct Stroke {
  enum class Kind { Polyline, QuadBezier };
  Kind kind = Kind::Polyline;
  std::vector<Vec2> ctrl;  // unit square; 2+ points (polyline) or exactly 3 (bezier)
};

struct CharTemplate {
  int char_class = 0;
  std::vector<Stroke> strokes;  // at least 2
};

// Deterministic pseudo-glyph alphabet; templates are pairwise distinct.
std::vector<CharTemplate> make_alphabet(int size, uint64_t seed);

// class id -> single-character symbol used in annotations
std::string class_symbol(int char_class);
int symbol_class(const std::string& symbol);  // -1 if unknown
int max_alphabet_size();

struct TextLineAnn {
  Quad points;
  std::string text;
  bool ignore = false;
};

struct CharAnn {
  Quad points;
  std::string ch;
};

struct GlyphSample {
  Image image;
  std::vector<TextLineAnn> text_lines;
  std::vector<CharAnn> chars;
  Difficulty difficulty = Difficulty::Simple;  // of the style the scene was drawn with
};

struct GlyphRender {
  Image image;  // canvas_px x canvas_px
  Quad box;     // tight box around ink, pixel-extent corners
};

// Deterministic in (template, style, rng_seed); throws std::invalid_argument
// when the canvas cannot fit the stroke width.
GlyphRender render_glyph(const CharTemplate& tmpl, const StyleParams& style,
                         int canvas_px, uint64_t rng_seed);

enum class Layout { Horizontal, Vertical };

struct SceneConfig {
  int image_w = 384;
  int image_h = 384;
  int cell_px = 96;        // glyph render canvas; desk configs shrink this
  int char_gap_px = 3;
  int line_pad_px = 2;     // text-line box padding around member chars
  double iou_budget = 0.0; // max allowed padded-box IOU between lines
  int max_retries = 50;
};

GlyphSample compose_scene(const std::vector<CharTemplate>& alphabet,
                          const std::vector<std::string>& texts,
                          const std::vector<StyleParams>& styles, Layout layout,
                          uint64_t rng_seed, const SceneConfig& cfg = {});

// Even split per difficulty class, preserving per-difficulty proportions
// exactly. Throws when a difficulty class has an odd count.
std::pair<std::vector<StyleParams>, std::vector<StyleParams>> split_styles(
    const std::vector<StyleParams>& pool, uint64_t rng_seed);

// JSON-lines manifest + one lossless PGM per sample under dir/images/.
// Returns the manifest path.
std::string write_dataset(const std::vector<GlyphSample>& samples, const std::string& dir);
std::vector<GlyphSample> read_dataset(const std::string& manifest_path);

// Annotations only (no image decode); used by validators and evaluation.
struct SampleRecord {
  std::string image_rel_path;
  std::vector<TextLineAnn> text_lines;
  std::vector<CharAnn> chars;
  Difficulty difficulty = Difficulty::Simple;
};
std::vector<SampleRecord> read_manifest(const std::string& manifest_path,
                                        bool check_images_exist = true);
std::string manifest_dir(const std::string& manifest_path);

// Deterministic style pool with the difficulty composition given by counts
// (simple, medium, hard).
std::vector<StyleParams> make_style_pool(int n_simple, int n_medium, int n_hard,
                                         uint64_t seed);

}  // namespace gspot::glyphgen
