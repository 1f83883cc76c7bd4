#include "gspot/glyphgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "gspot/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gspot::glyphgen {

const char* difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::Simple: return "simple";
    case Difficulty::Medium: return "medium";
    case Difficulty::Hard: return "hard";
  }
  return "?";
}

Difficulty difficulty_from_name(const std::string& name) {
  if (name == "simple") return Difficulty::Simple;
  if (name == "medium") return Difficulty::Medium;
  if (name == "hard") return Difficulty::Hard;
  throw std::invalid_argument("unknown difficulty name: " + name);
}

Difficulty difficulty_of(double curvature_jitter, double decoration_level) {
  if (decoration_level >= 0.5) return Difficulty::Hard;
  if (curvature_jitter < 0.15 && decoration_level < 0.1) return Difficulty::Simple;
  return Difficulty::Medium;
}

StyleParams StyleParams::make(int id, double stroke_width, double slant,
                              double curvature_jitter, double decoration_level) {
  StyleParams s;
  s.style_id = id;
  s.stroke_width = stroke_width;
  s.slant = slant;
  s.curvature_jitter = curvature_jitter;
  s.decoration_level = decoration_level;
  s.difficulty = difficulty_of(curvature_jitter, decoration_level);
  s.validate();
  return s;
}

void StyleParams::validate() const {
  if (stroke_width < 1.0 || stroke_width > 6.0)
    throw std::invalid_argument("StyleParams: stroke_width outside [1, 6]");
  if (slant < -0.4 || slant > 0.4)
    throw std::invalid_argument("StyleParams: slant outside [-0.4, 0.4]");
  if (curvature_jitter < 0.0 || curvature_jitter > 1.0)
    throw std::invalid_argument("StyleParams: curvature_jitter outside [0, 1]");
  if (decoration_level < 0.0 || decoration_level > 1.0)
    throw std::invalid_argument("StyleParams: decoration_level outside [0, 1]");
  if (difficulty != difficulty_of(curvature_jitter, decoration_level))
    throw std::invalid_argument("StyleParams: difficulty inconsistent with knobs");
}

// ---------------------------------------------------------------------------
// alphabet
// ---------------------------------------------------------------------------

namespace {

// 88 printable ASCII symbols, stable class order.
const std::string kSymbols =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789"
    "!$%&()*+,-./:;<=>?@[]^_{}";

// Quantized signature used to keep templates pairwise distinct.
uint64_t template_signature(const CharTemplate& t) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ULL;
  };
  for (const Stroke& s : t.strokes) {
    mix(static_cast<uint64_t>(s.kind));
    for (const Vec2& p : s.ctrl) {
      mix(static_cast<uint64_t>(std::lround(p.x * 8)));
      mix(static_cast<uint64_t>(std::lround(p.y * 8)));
    }
  }
  return h;
}

CharTemplate sample_template(int char_class, Rng& rng) {
  CharTemplate t;
  t.char_class = char_class;
  const int n_strokes = 2 + static_cast<int>(rng.uniform_int(3));  // 2..4
  for (int s = 0; s < n_strokes; ++s) {
    Stroke st;
    const bool bezier = rng.bernoulli(0.4);
    st.kind = bezier ? Stroke::Kind::QuadBezier : Stroke::Kind::Polyline;
    const int npts = bezier ? 3 : 2 + static_cast<int>(rng.uniform_int(2));  // 2..3
    for (int attempt = 0; attempt < 64; ++attempt) {
      st.ctrl.clear();
      for (int p = 0; p < npts; ++p)
        st.ctrl.push_back({rng.uniform(0.08, 0.92), rng.uniform(0.08, 0.92)});
      double len = 0.0;
      for (size_t p = 1; p < st.ctrl.size(); ++p) len += norm(st.ctrl[p] - st.ctrl[p - 1]);
      if (len >= 0.35) break;  // avoid degenerate specks
    }
    t.strokes.push_back(std::move(st));
  }
  return t;
}

}  // namespace

std::string class_symbol(int char_class) {
  if (char_class < 0 || char_class >= static_cast<int>(kSymbols.size()))
    throw std::invalid_argument("class_symbol: class id " + std::to_string(char_class) +
                                " outside supported alphabet");
  return std::string(1, kSymbols[static_cast<size_t>(char_class)]);
}

int symbol_class(const std::string& symbol) {
  if (symbol.size() != 1) return -1;
  const size_t pos = kSymbols.find(symbol[0]);
  return pos == std::string::npos ? -1 : static_cast<int>(pos);
}

int max_alphabet_size() { return static_cast<int>(kSymbols.size()); }

std::vector<CharTemplate> make_alphabet(int size, uint64_t seed) {
  if (size < 1 || size > max_alphabet_size())
    throw std::invalid_argument("make_alphabet: size must be in [1, " +
                                std::to_string(max_alphabet_size()) + "]");
  std::vector<CharTemplate> out;
  std::set<uint64_t> seen;
  for (int c = 0; c < size; ++c) {
    CharTemplate t;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      Rng rng(Rng::mix(seed, static_cast<uint64_t>(c), static_cast<uint64_t>(attempt)));
      t = sample_template(c, rng);
      if (seen.insert(template_signature(t)).second) break;
    }
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

namespace {

struct Capsule {
  Vec2 a, b;
  double radius;
};

double dist_to_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 <= 0.0) return norm(p - a);
  double t = dot(p - a, ab) / len2;
  t = std::min(1.0, std::max(0.0, t));
  return norm(p - (a + t * ab));
}

void add_polyline(std::vector<Capsule>& caps, const std::vector<Vec2>& pts, double radius) {
  for (size_t i = 1; i < pts.size(); ++i) caps.push_back({pts[i - 1], pts[i], radius});
}

std::vector<Vec2> flatten_stroke(const Stroke& s, int bezier_segments = 10) {
  if (s.kind == Stroke::Kind::Polyline) return s.ctrl;
  std::vector<Vec2> out;
  out.reserve(static_cast<size_t>(bezier_segments) + 1);
  for (int i = 0; i <= bezier_segments; ++i) {
    const double t = static_cast<double>(i) / bezier_segments;
    const double w0 = (1 - t) * (1 - t), w1 = 2 * (1 - t) * t, w2 = t * t;
    out.push_back(w0 * s.ctrl[0] + w1 * s.ctrl[1] + w2 * s.ctrl[2]);
  }
  return out;
}

Vec2 perp_unit(Vec2 v) {
  const double n = norm(v);
  if (n <= 1e-12) return {0.0, 1.0};
  return {-v.y / n, v.x / n};
}

// Rescale/translate capsules so all ink (center +/- radius + 1px AA) fits
// inside the canvas.
void fit_to_canvas(std::vector<Capsule>& caps, int canvas) {
  double lo_x = 1e30, lo_y = 1e30, hi_x = -1e30, hi_y = -1e30;
  for (const Capsule& c : caps) {
    for (const Vec2& p : {c.a, c.b}) {
      lo_x = std::min(lo_x, p.x - c.radius - 1.0);
      lo_y = std::min(lo_y, p.y - c.radius - 1.0);
      hi_x = std::max(hi_x, p.x + c.radius + 1.0);
      hi_y = std::max(hi_y, p.y + c.radius + 1.0);
    }
  }
  const double span = std::max(hi_x - lo_x, hi_y - lo_y);
  double scale = 1.0;
  if (span > canvas - 1) scale = (canvas - 1) / span;
  // center within the canvas
  const double cx = 0.5 * (lo_x + hi_x) * scale;
  const double cy = 0.5 * (lo_y + hi_y) * scale;
  const Vec2 shift{canvas * 0.5 - cx, canvas * 0.5 - cy};
  for (Capsule& c : caps) {
    c.a = scale * c.a + shift;
    c.b = scale * c.b + shift;
    c.radius *= scale;
  }
}

void rasterize(const std::vector<Capsule>& caps, Image& im) {
  std::vector<double> cov(im.px.size(), 0.0);
  for (const Capsule& c : caps) {
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(c.a.x, c.b.x) - c.radius - 1)));
    const int x1 = std::min(im.width - 1,
                            static_cast<int>(std::ceil(std::max(c.a.x, c.b.x) + c.radius + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(c.a.y, c.b.y) - c.radius - 1)));
    const int y1 = std::min(im.height - 1,
                            static_cast<int>(std::ceil(std::max(c.a.y, c.b.y) + c.radius + 1)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double d = dist_to_segment({static_cast<double>(x), static_cast<double>(y)}, c.a, c.b);
        const double v = std::min(1.0, std::max(0.0, c.radius + 0.5 - d));
        auto& cell = cov[static_cast<size_t>(y) * im.width + x];
        cell = std::max(cell, v);
      }
    }
  }
  for (size_t i = 0; i < cov.size(); ++i)
    im.px[i] = static_cast<uint8_t>(std::lround(255.0 * cov[i]));
}

}  // namespace

GlyphRender render_glyph(const CharTemplate& tmpl, const StyleParams& style,
                         int canvas_px, uint64_t rng_seed) {
  if (canvas_px < 32) throw std::invalid_argument("render_glyph: canvas_px must be >= 32");
  style.validate();
  if (tmpl.strokes.size() < 2)
    throw std::invalid_argument("render_glyph: template needs at least 2 strokes");

  const double margin = style.stroke_width * 0.5 + 1.5 + (style.decoration_level > 0.0 ? 3.0 : 0.0);
  const double scale = canvas_px - 2.0 * margin;
  if (scale < 4.0 * style.stroke_width)
    throw std::invalid_argument(
        "render_glyph: canvas too small to fit stroke width (canvas " +
        std::to_string(canvas_px) + ", stroke " + std::to_string(style.stroke_width) + ")");

  Rng rng(rng_seed);

  // Control points: jitter, then slant shear about the vertical center.
  std::vector<std::vector<Vec2>> polys;
  std::vector<Vec2> endpoints, end_dirs;
  for (const Stroke& s : tmpl.strokes) {
    Stroke jittered = s;
    for (Vec2& p : jittered.ctrl) {
      // fixed draw order keeps the stream deterministic even at jitter 0
      const double ang = rng.uniform(0.0, 6.283185307179586477);
      const double rad = style.curvature_jitter * 0.12 * std::sqrt(rng.uniform());
      p.x = std::min(0.98, std::max(0.02, p.x + rad * std::cos(ang)));
      p.y = std::min(0.98, std::max(0.02, p.y + rad * std::sin(ang)));
    }
    for (Vec2& p : jittered.ctrl) p.x += style.slant * (0.5 - p.y);
    std::vector<Vec2> flat = flatten_stroke(jittered);
    if (flat.size() >= 2) {
      endpoints.push_back(flat.front());
      end_dirs.push_back(flat[1] - flat[0]);
      endpoints.push_back(flat.back());
      end_dirs.push_back(flat[flat.size() - 2] - flat.back());
    }
    polys.push_back(std::move(flat));
  }

  // unit -> pixel space
  std::vector<Capsule> caps;
  const double r = style.stroke_width * 0.5;
  auto to_px = [&](Vec2 p) { return Vec2{margin + p.x * scale, margin + p.y * scale}; };
  for (auto& poly : polys) {
    for (Vec2& p : poly) p = to_px(p);
    add_polyline(caps, poly, r);
  }

  // decorations: serifs at stroke ends, offset echo strokes, ink dots
  if (style.decoration_level > 0.0) {
    const double serif_len = style.decoration_level * 0.14 * scale;
    if (serif_len > 0.75) {
      for (size_t e = 0; e < endpoints.size(); ++e) {
        const Vec2 p = to_px(endpoints[e]);
        const Vec2 n = perp_unit(end_dirs[e]);
        caps.push_back({p - (0.5 * serif_len) * n, p + (0.5 * serif_len) * n, 0.6 * r});
      }
    }
    if (style.decoration_level >= 0.5) {
      // echo stroke: thin offset copy, reads as outline decoration
      const double off = (style.decoration_level - 0.35) * 0.09 * scale;
      for (const auto& poly : polys) {
        if (poly.size() < 2) continue;
        const Vec2 n = perp_unit(poly.back() - poly.front());
        std::vector<Vec2> shifted = poly;
        for (Vec2& p : shifted) p = p + off * n;
        add_polyline(caps, shifted, std::max(0.5, 0.45 * r));
      }
    }
    const int n_dots = static_cast<int>(std::lround(style.decoration_level * 6.0));
    for (int d = 0; d < n_dots; ++d) {
      const auto& poly = polys[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(polys.size())))];
      const size_t seg = static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(poly.size() - 1)));
      const double t = rng.uniform();
      const Vec2 base = poly[seg] + t * (poly[seg + 1] - poly[seg]);
      const Vec2 n = perp_unit(poly[seg + 1] - poly[seg]);
      const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
      const Vec2 c = base + (side * (r + 1.5 + rng.uniform(0.0, 2.0))) * n;
      caps.push_back({c, c, std::max(0.8, 0.35 * style.stroke_width)});
    }
  }

  fit_to_canvas(caps, canvas_px);

  GlyphRender out;
  out.image = Image(canvas_px, canvas_px);
  rasterize(caps, out.image);

  int minx = canvas_px, miny = canvas_px, maxx = -1, maxy = -1;
  for (int y = 0; y < canvas_px; ++y)
    for (int x = 0; x < canvas_px; ++x)
      if (out.image.at(y, x) > 0) {
        minx = std::min(minx, x);
        maxx = std::max(maxx, x);
        miny = std::min(miny, y);
        maxy = std::max(maxy, y);
      }
  if (maxx < 0) throw std::runtime_error("render_glyph: produced empty raster");
  // pixel-extent corners: pixel (x, y) occupies [x, x+1) x [y, y+1)
  out.box = Quad::axis_aligned(minx, miny, maxx + 1, maxy + 1);
  return out;
}

// ---------------------------------------------------------------------------
// scene composition
// ---------------------------------------------------------------------------

namespace {

void blit_max(Image& dst, const Image& src, int ox, int oy) {
  for (int y = 0; y < src.height; ++y) {
    const int dy = oy + y;
    if (dy < 0 || dy >= dst.height) continue;
    for (int x = 0; x < src.width; ++x) {
      const int dx = ox + x;
      if (dx < 0 || dx >= dst.width) continue;
      dst.at(dy, dx) = std::max(dst.at(dy, dx), src.at(y, x));
    }
  }
}

Quad offset_quad(const Quad& q, double ox, double oy) {
  Quad out = q;
  for (Vec2& p : out.p) {
    p.x += ox;
    p.y += oy;
  }
  return out;
}

Quad pad_quad(const Quad& q, double pad) {
  return Quad::axis_aligned(q.min_x() - pad, q.min_y() - pad, q.max_x() + pad, q.max_y() + pad);
}

}  // namespace

GlyphSample compose_scene(const std::vector<CharTemplate>& alphabet,
                          const std::vector<std::string>& texts,
                          const std::vector<StyleParams>& styles, Layout layout,
                          uint64_t rng_seed, const SceneConfig& cfg) {
  if (texts.size() != styles.size())
    throw std::invalid_argument("compose_scene: |styles| must equal |texts|");

  GlyphSample sample;
  sample.image = Image(cfg.image_w, cfg.image_h);
  Rng place_rng(Rng::mix(rng_seed, 0x9c3e));

  std::vector<Quad> placed_line_boxes;

  for (size_t li = 0; li < texts.size(); ++li) {
    const std::string& text = texts[li];
    if (text.empty()) throw std::invalid_argument("compose_scene: empty text");

    // render glyphs first, measure tight boxes
    std::vector<GlyphRender> glyphs;
    for (size_t ci = 0; ci < text.size(); ++ci) {
      const int cls = symbol_class(std::string(1, text[ci]));
      if (cls < 0 || cls >= static_cast<int>(alphabet.size()))
        throw std::invalid_argument("compose_scene: no template for character '" +
                                    std::string(1, text[ci]) + "'");
      glyphs.push_back(render_glyph(alphabet[static_cast<size_t>(cls)], styles[li], cfg.cell_px,
                                    Rng::mix(rng_seed, li, ci)));
    }

    // advance along the layout axis by tight-box extent + gap
    std::vector<Vec2> rel_origin(glyphs.size());
    double extent_main = 0.0, extent_cross = 0.0;
    for (size_t ci = 0; ci < glyphs.size(); ++ci) {
      const Quad& b = glyphs[ci].box;
      if (layout == Layout::Horizontal) {
        rel_origin[ci] = {extent_main - b.min_x(), -b.min_y()};
        extent_main += b.width() + (ci + 1 < glyphs.size() ? cfg.char_gap_px : 0);
        extent_cross = std::max(extent_cross, b.height());
      } else {
        rel_origin[ci] = {-b.min_x(), extent_main - b.min_y()};
        extent_main += b.height() + (ci + 1 < glyphs.size() ? cfg.char_gap_px : 0);
        extent_cross = std::max(extent_cross, b.width());
      }
    }
    const double line_w = layout == Layout::Horizontal ? extent_main : extent_cross;
    const double line_h = layout == Layout::Horizontal ? extent_cross : extent_main;

    const double border = cfg.line_pad_px + 1;
    const double max_ox = cfg.image_w - line_w - border;
    const double max_oy = cfg.image_h - line_h - border;
    if (max_ox < border || max_oy < border)
      throw std::invalid_argument("compose_scene: text '" + text + "' does not fit the image");

    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
      const double ox = std::floor(place_rng.uniform(border, max_ox + 1));
      const double oy = std::floor(place_rng.uniform(border, max_oy + 1));

      // tight line box for this placement
      double lminx = 1e30, lminy = 1e30, lmaxx = -1e30, lmaxy = -1e30;
      for (size_t ci = 0; ci < glyphs.size(); ++ci) {
        const Quad b =
            offset_quad(glyphs[ci].box, ox + rel_origin[ci].x, oy + rel_origin[ci].y);
        lminx = std::min(lminx, b.min_x());
        lminy = std::min(lminy, b.min_y());
        lmaxx = std::max(lmaxx, b.max_x());
        lmaxy = std::max(lmaxy, b.max_y());
      }
      Quad line_box = Quad::axis_aligned(lminx - cfg.line_pad_px, lminy - cfg.line_pad_px,
                                         lmaxx + cfg.line_pad_px, lmaxy + cfg.line_pad_px);

      bool collides = false;
      for (const Quad& other : placed_line_boxes) {
        if (quad_iou(pad_quad(line_box, 1.0), pad_quad(other, 1.0)) > cfg.iou_budget) {
          collides = true;
          break;
        }
      }
      if (collides) continue;

      // commit
      for (size_t ci = 0; ci < glyphs.size(); ++ci) {
        const int gx = static_cast<int>(std::lround(ox + rel_origin[ci].x));
        const int gy = static_cast<int>(std::lround(oy + rel_origin[ci].y));
        blit_max(sample.image, glyphs[ci].image, gx, gy);
        CharAnn ca;
        ca.points = offset_quad(glyphs[ci].box, gx, gy);
        ca.ch = std::string(1, text[ci]);
        sample.chars.push_back(ca);
      }
      TextLineAnn ta;
      ta.points = line_box;
      ta.text = text;
      ta.ignore = false;
      sample.text_lines.push_back(ta);
      placed_line_boxes.push_back(line_box);
      placed = true;
    }
    if (!placed)
      throw std::runtime_error("compose_scene: could not place text line " + std::to_string(li) +
                               " within " + std::to_string(cfg.max_retries) + " attempts");
  }
  return sample;
}

std::pair<std::vector<StyleParams>, std::vector<StyleParams>> split_styles(
    const std::vector<StyleParams>& pool, uint64_t rng_seed) {
  std::vector<std::vector<size_t>> by_diff(3);
  for (size_t i = 0; i < pool.size(); ++i)
    by_diff[static_cast<size_t>(pool[i].difficulty)].push_back(i);

  std::string odd;
  for (int d = 0; d < 3; ++d)
    if (by_diff[static_cast<size_t>(d)].size() % 2 != 0)
      odd += std::string(odd.empty() ? "" : ", ") + difficulty_name(static_cast<Difficulty>(d));
  if (!odd.empty())
    throw std::invalid_argument("split_styles: odd style count for difficulty class(es): " + odd);

  Rng rng(rng_seed);
  std::pair<std::vector<StyleParams>, std::vector<StyleParams>> out;
  for (auto& idxs : by_diff) {
    for (size_t i = idxs.size(); i > 1; --i)
      std::swap(idxs[i - 1], idxs[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(i)))]);
    for (size_t i = 0; i < idxs.size(); ++i)
      (i < idxs.size() / 2 ? out.first : out.second).push_back(pool[idxs[i]]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// dataset IO
// ---------------------------------------------------------------------------

namespace {

json quad_to_json(const Quad& q) {
  json pts = json::array();
  for (const Vec2& p : q.p) pts.push_back(json::array({p.x, p.y}));
  return pts;
}

Quad quad_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4)
    throw std::runtime_error(where + ": box must have exactly 4 points");
  Quad q;
  for (size_t i = 0; i < 4; ++i) {
    if (!j[i].is_array() || j[i].size() != 2)
      throw std::runtime_error(where + ": box point must be [x, y]");
    q.p[i] = {j[i][0].get<double>(), j[i][1].get<double>()};
  }
  return q;
}

}  // namespace

std::string write_dataset(const std::vector<GlyphSample>& samples, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  const std::string manifest_path = (fs::path(dir) / "manifest.jsonl").string();
  std::ofstream mf(manifest_path, std::ios::binary);
  if (!mf) throw std::runtime_error("write_dataset: cannot open " + manifest_path);

  for (size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "images/%06zu.pgm", i);
    write_pgm(samples[i].image, (fs::path(dir) / name).string());

    json rec;
    rec["image"] = name;
    rec["text_lines"] = json::array();
    for (const TextLineAnn& t : samples[i].text_lines)
      rec["text_lines"].push_back(
          {{"points", quad_to_json(t.points)}, {"text", t.text}, {"ignore", t.ignore}});
    rec["chars"] = json::array();
    for (const CharAnn& c : samples[i].chars)
      rec["chars"].push_back({{"points", quad_to_json(c.points)}, {"char", c.ch}});
    rec["difficulty"] = difficulty_name(samples[i].difficulty);
    mf << rec.dump() << "\n";
  }
  if (!mf) throw std::runtime_error("write_dataset: write failed for " + manifest_path);
  return manifest_path;
}

std::string manifest_dir(const std::string& manifest_path) {
  return fs::path(manifest_path).parent_path().string();
}

std::vector<SampleRecord> read_manifest(const std::string& manifest_path,
                                        bool check_images_exist) {
  std::ifstream mf(manifest_path, std::ios::binary);
  if (!mf) throw std::runtime_error("read_manifest: cannot open " + manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();

  std::vector<SampleRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(mf, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = manifest_path + " line " + std::to_string(lineno);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error(where + ": malformed JSON: " + e.what());
    }
    SampleRecord sr;
    if (!rec.contains("image") || !rec["image"].is_string())
      throw std::runtime_error(where + ": missing image path");
    sr.image_rel_path = rec["image"].get<std::string>();
    if (check_images_exist && !fs::exists(base / sr.image_rel_path))
      throw std::runtime_error(where + ": missing image file: " + sr.image_rel_path);
    for (const json& t : rec.value("text_lines", json::array())) {
      TextLineAnn ta;
      ta.points = quad_from_json(t.at("points"), where);
      ta.text = t.at("text").get<std::string>();
      ta.ignore = t.value("ignore", false);
      sr.text_lines.push_back(std::move(ta));
    }
    for (const json& c : rec.value("chars", json::array())) {
      CharAnn ca;
      ca.points = quad_from_json(c.at("points"), where);
      ca.ch = c.at("char").get<std::string>();
      if (ca.ch.size() != 1)
        throw std::runtime_error(where + ": char annotation must be a single character");
      sr.chars.push_back(std::move(ca));
    }
    if (rec.contains("difficulty")) {
      try {
        sr.difficulty = difficulty_from_name(rec["difficulty"].get<std::string>());
      } catch (const std::exception& e) {
        throw std::runtime_error(where + ": " + e.what());
      }
    }
    out.push_back(std::move(sr));
  }
  return out;
}

std::vector<GlyphSample> read_dataset(const std::string& manifest_path) {
  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<GlyphSample> out;
  for (const SampleRecord& sr : read_manifest(manifest_path)) {
    GlyphSample s;
    s.image = read_pgm((base / sr.image_rel_path).string());
    s.text_lines = sr.text_lines;
    s.chars = sr.chars;
    s.difficulty = sr.difficulty;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<StyleParams> make_style_pool(int n_simple, int n_medium, int n_hard, uint64_t seed) {
  std::vector<StyleParams> pool;
  int id = 0;
  auto add = [&](int count, Difficulty target) {
    for (int i = 0; i < count; ++i) {
      Rng rng(Rng::mix(seed, static_cast<uint64_t>(target), static_cast<uint64_t>(i)));
      double jit = 0.0, dec = 0.0;
      switch (target) {
        case Difficulty::Simple:
          jit = rng.uniform(0.0, 0.14);
          dec = rng.uniform(0.0, 0.09);
          break;
        case Difficulty::Medium:
          jit = rng.uniform(0.2, 0.7);
          dec = rng.uniform(0.0, 0.45);
          break;
        case Difficulty::Hard:
          jit = rng.uniform(0.3, 1.0);
          dec = rng.uniform(0.5, 1.0);
          break;
      }
      pool.push_back(StyleParams::make(id++, rng.uniform(1.2, 3.2), rng.uniform(-0.35, 0.35),
                                       jit, dec));
    }
  };
  add(n_simple, Difficulty::Simple);
  add(n_medium, Difficulty::Medium);
  add(n_hard, Difficulty::Hard);
  return pool;
}

}  // namespace gspot::glyphgen
