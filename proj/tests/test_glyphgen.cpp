#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "gspot/glyphgen.hpp"

using namespace gspot;
using namespace gspot::glyphgen;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("gspot_glyphgen_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("difficulty thresholds") {
  CHECK(difficulty_of(0.14, 0.09) == Difficulty::Simple);
  CHECK(difficulty_of(0.15, 0.09) == Difficulty::Medium);
  CHECK(difficulty_of(0.0, 0.1) == Difficulty::Medium);
  CHECK(difficulty_of(0.9, 0.49) == Difficulty::Medium);
  CHECK(difficulty_of(0.0, 0.5) == Difficulty::Hard);
  // decoration_level = 0 can never be hard
  for (double j : {0.0, 0.3, 0.7, 1.0}) CHECK(difficulty_of(j, 0.0) != Difficulty::Hard);
}

TEST_CASE("make_alphabet produces valid, distinct, deterministic templates") {
  auto a1 = make_alphabet(50, 123);
  auto a2 = make_alphabet(50, 123);
  REQUIRE(a1.size() == 50);
  std::set<std::string> fingerprints;
  for (size_t c = 0; c < a1.size(); ++c) {
    CHECK(a1[c].char_class == static_cast<int>(c));
    CHECK(a1[c].strokes.size() >= 2);
    std::string fp;
    for (const Stroke& s : a1[c].strokes) {
      fp += s.kind == Stroke::Kind::QuadBezier ? 'b' : 'p';
      for (const Vec2& p : s.ctrl) {
        CHECK(p.x >= 0.0);
        CHECK(p.x <= 1.0);
        fp += "," + std::to_string(p.x) + "," + std::to_string(p.y);
      }
      if (s.kind == Stroke::Kind::QuadBezier) CHECK(s.ctrl.size() == 3);
      if (s.kind == Stroke::Kind::Polyline) CHECK(s.ctrl.size() >= 2);
    }
    fingerprints.insert(fp);
    // same seed reproduces the template exactly
    CHECK(a1[c].strokes.size() == a2[c].strokes.size());
  }
  CHECK(fingerprints.size() == a1.size());  // pairwise distinct
  CHECK_THROWS_AS(make_alphabet(0, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_alphabet(max_alphabet_size() + 1, 1), std::invalid_argument);
}

TEST_CASE("class_symbol round trips") {
  for (int c = 0; c < max_alphabet_size(); ++c) CHECK(symbol_class(class_symbol(c)) == c);
  CHECK(symbol_class("\t") == -1);
  CHECK(symbol_class("ab") == -1);
}

TEST_CASE("render_glyph is deterministic per seed") {
  auto alpha = make_alphabet(3, 9);
  StyleParams s = StyleParams::make(0, 2.5, 0.1, 0.4, 0.3);
  GlyphRender r1 = render_glyph(alpha[0], s, 96, 7);
  GlyphRender r2 = render_glyph(alpha[0], s, 96, 7);
  CHECK(r1.image == r2.image);
  for (int k = 0; k < 4; ++k) {
    CHECK(r1.box.p[k].x == r2.box.p[k].x);
    CHECK(r1.box.p[k].y == r2.box.p[k].y);
  }
}

TEST_CASE("identity style ignores the seed") {
  // no jitter, no decoration: the raster is the undecorated base rendering
  auto alpha = make_alphabet(2, 31);
  StyleParams s = StyleParams::make(0, 2.0, 0.0, 0.0, 0.0);
  GlyphRender r1 = render_glyph(alpha[0], s, 96, 7);
  GlyphRender r2 = render_glyph(alpha[0], s, 96, 1234567);
  CHECK(r1.image == r2.image);
}

TEST_CASE("render_glyph box encloses exactly the ink") {
  auto alpha = make_alphabet(5, 77);
  for (int c = 0; c < 5; ++c) {
    StyleParams s = StyleParams::make(c, 1.5 + 0.5 * c, -0.2 + 0.1 * c, 0.2 * c / 4.0,
                                      c == 4 ? 0.8 : 0.2 * c / 4.0);
    GlyphRender r = render_glyph(alpha[static_cast<size_t>(c)], s, 96, 100 + c);
    int minx = r.image.width, miny = r.image.height, maxx = -1, maxy = -1;
    for (int y = 0; y < r.image.height; ++y)
      for (int x = 0; x < r.image.width; ++x)
        if (r.image.at(y, x) > 0) {
          minx = std::min(minx, x);
          maxx = std::max(maxx, x);
          miny = std::min(miny, y);
          maxy = std::max(maxy, y);
        }
    REQUIRE(maxx >= 0);  // some ink exists
    // pixel-extent box: [minx, maxx+1] x [miny, maxy+1]
    CHECK(r.box.min_x() == doctest::Approx(minx));
    CHECK(r.box.min_y() == doctest::Approx(miny));
    CHECK(r.box.max_x() == doctest::Approx(maxx + 1));
    CHECK(r.box.max_y() == doctest::Approx(maxy + 1));
    // ink fully inside the canvas (box inside raster bounds)
    CHECK(r.box.min_x() >= 0);
    CHECK(r.box.min_y() >= 0);
    CHECK(r.box.max_x() <= r.image.width);
    CHECK(r.box.max_y() <= r.image.height);
  }
}

TEST_CASE("render_glyph rejects a canvas too small for the stroke") {
  auto alpha = make_alphabet(1, 8);
  StyleParams fat = StyleParams::make(0, 6.0, 0.0, 0.0, 0.6);
  CHECK_THROWS_AS(render_glyph(alpha[0], fat, 32, 1), std::invalid_argument);
  CHECK_THROWS_AS(render_glyph(alpha[0], fat, 20, 1), std::invalid_argument);  // < 32 floor
}

TEST_CASE("compose_scene horizontal: one 4-char text") {
  auto alpha = make_alphabet(50, 5);
  StyleParams s = StyleParams::make(0, 2.0, 0.05, 0.1, 0.0);
  SceneConfig cfg;
  cfg.image_w = 320;
  cfg.image_h = 160;
  cfg.cell_px = 48;
  GlyphSample sc = compose_scene(alpha, {"ABCD"}, {s}, Layout::Horizontal, 99, cfg);

  REQUIRE(sc.text_lines.size() == 1);
  REQUIRE(sc.chars.size() == 4);
  CHECK(sc.text_lines[0].text == "ABCD");
  CHECK_FALSE(sc.text_lines[0].ignore);
  std::string cat;
  for (size_t i = 0; i < sc.chars.size(); ++i) {
    cat += sc.chars[i].ch;
    if (i > 0)
      CHECK(sc.chars[i].points.centroid().x > sc.chars[i - 1].points.centroid().x);
  }
  CHECK(cat == sc.text_lines[0].text);
}

TEST_CASE("compose_scene vertical: centroids increase in y") {
  auto alpha = make_alphabet(50, 5);
  StyleParams s = StyleParams::make(0, 2.0, 0.0, 0.1, 0.0);
  SceneConfig cfg;
  cfg.image_w = 160;
  cfg.image_h = 320;
  cfg.cell_px = 48;
  GlyphSample sc = compose_scene(alpha, {"vwx"}, {s}, Layout::Vertical, 17, cfg);
  REQUIRE(sc.chars.size() == 3);
  for (size_t i = 1; i < sc.chars.size(); ++i)
    CHECK(sc.chars[i].points.centroid().y > sc.chars[i - 1].points.centroid().y);
}

TEST_CASE("compose_scene is deterministic per seed") {
  auto alpha = make_alphabet(50, 5);
  auto styles = std::vector<StyleParams>{StyleParams::make(0, 2.0, 0.1, 0.3, 0.2),
                                         StyleParams::make(1, 3.0, -0.1, 0.5, 0.6)};
  SceneConfig cfg;
  cfg.image_w = 400;
  cfg.image_h = 400;
  cfg.cell_px = 48;
  GlyphSample a = compose_scene(alpha, {"AB", "cd"}, styles, Layout::Horizontal, 4, cfg);
  GlyphSample b = compose_scene(alpha, {"AB", "cd"}, styles, Layout::Horizontal, 4, cfg);
  CHECK(a.image == b.image);
  REQUIRE(a.chars.size() == b.chars.size());
  for (size_t i = 0; i < a.chars.size(); ++i)
    for (int k = 0; k < 4; ++k) {
      CHECK(a.chars[i].points.p[k].x == b.chars[i].points.p[k].x);
      CHECK(a.chars[i].points.p[k].y == b.chars[i].points.p[k].y);
    }
}

TEST_CASE("compose_scene: char boxes belong to exactly one line") {
  auto alpha = make_alphabet(50, 5);
  auto styles = std::vector<StyleParams>{StyleParams::make(0, 2.0, 0.1, 0.3, 0.0),
                                         StyleParams::make(1, 2.5, -0.1, 0.2, 0.55),
                                         StyleParams::make(2, 1.5, 0.0, 0.6, 0.3)};
  SceneConfig cfg;
  cfg.image_w = 512;
  cfg.image_h = 512;
  cfg.cell_px = 48;
  GlyphSample sc = compose_scene(alpha, {"ABC", "def", "GH"}, styles, Layout::Horizontal, 21, cfg);
  REQUIRE(sc.text_lines.size() == 3);
  REQUIRE(sc.chars.size() == 8);

  for (const CharAnn& ca : sc.chars) {
    int overlaps = 0;
    for (const TextLineAnn& ta : sc.text_lines)
      if (quad_iou(ca.points, ta.points) > 0.0) ++overlaps;
    CHECK(overlaps == 1);
  }
  // line boxes pairwise disjoint under the zero IOU budget
  for (size_t i = 0; i < sc.text_lines.size(); ++i)
    for (size_t j = i + 1; j < sc.text_lines.size(); ++j)
      CHECK(quad_iou(sc.text_lines[i].points, sc.text_lines[j].points) == 0.0);

  // reading order: concatenation of member chars equals the line text
  for (const TextLineAnn& ta : sc.text_lines) {
    std::vector<const CharAnn*> members;
    for (const CharAnn& ca : sc.chars)
      if (quad_iou(ca.points, ta.points) > 0.0) members.push_back(&ca);
    std::sort(members.begin(), members.end(), [](const CharAnn* a, const CharAnn* b) {
      return a->points.centroid().x < b->points.centroid().x;
    });
    std::string cat;
    for (const CharAnn* m : members) cat += m->ch;
    CHECK(cat == ta.text);
  }
}

TEST_CASE("compose_scene errors") {
  auto alpha = make_alphabet(3, 5);  // only A, B, C
  StyleParams s = StyleParams::make(0, 2.0, 0.0, 0.0, 0.0);
  SceneConfig cfg;
  cfg.image_w = 200;
  cfg.image_h = 200;
  cfg.cell_px = 48;
  CHECK_THROWS_AS(compose_scene(alpha, {"AZ"}, {s}, Layout::Horizontal, 1, cfg),
                  std::invalid_argument);
  CHECK_THROWS_AS(compose_scene(alpha, {"AB", "C"},
                                {s}, Layout::Horizontal, 1, cfg),
                  std::invalid_argument);  // |styles| != |texts|

  // text wider than the image
  SceneConfig tiny = cfg;
  tiny.image_w = 90;
  CHECK_THROWS_AS(compose_scene(alpha, {"ABC"}, {s}, Layout::Horizontal, 1, tiny),
                  std::invalid_argument);

  // image fits one line; a second identical line exhausts placement retries
  SceneConfig packed = cfg;
  packed.image_w = 120;
  packed.image_h = 56;
  CHECK_THROWS_AS(compose_scene(alpha, {"AB", "AB"}, {s, s}, Layout::Horizontal, 1, packed),
                  std::runtime_error);
}

TEST_CASE("split_styles preserves difficulty proportions") {
  auto pool = make_style_pool(16, 22, 12, 2024);
  REQUIRE(pool.size() == 50);
  auto [a, b] = split_styles(pool, 3);
  CHECK(a.size() == 25);
  CHECK(b.size() == 25);
  auto count = [](const std::vector<StyleParams>& v, Difficulty d) {
    return std::count_if(v.begin(), v.end(),
                         [d](const StyleParams& s) { return s.difficulty == d; });
  };
  CHECK(count(a, Difficulty::Simple) == 8);
  CHECK(count(a, Difficulty::Medium) == 11);
  CHECK(count(a, Difficulty::Hard) == 6);
  CHECK(count(b, Difficulty::Simple) == 8);
  CHECK(count(b, Difficulty::Medium) == 11);
  CHECK(count(b, Difficulty::Hard) == 6);

  // partition: disjoint by style_id, union = pool
  std::set<int> ids;
  for (const auto& s : a) ids.insert(s.style_id);
  for (const auto& s : b) CHECK(ids.insert(s.style_id).second);
  CHECK(ids.size() == pool.size());
}

TEST_CASE("split_styles: two simple styles -> one each") {
  auto pool = make_style_pool(2, 0, 0, 7);
  auto [a, b] = split_styles(pool, 1);
  CHECK(a.size() == 1);
  CHECK(b.size() == 1);
  CHECK(a[0].style_id != b[0].style_id);
}

TEST_CASE("split_styles rejects odd per-difficulty counts naming the class") {
  auto pool = make_style_pool(3, 2, 2, 7);
  try {
    split_styles(pool, 1);
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("simple") != std::string::npos);
  }
}

TEST_CASE("dataset round trip is annotation- and pixel-exact") {
  auto alpha = make_alphabet(50, 5);
  SceneConfig cfg;
  cfg.image_w = 256;
  cfg.image_h = 256;
  cfg.cell_px = 40;
  std::vector<GlyphSample> samples;
  for (int i = 0; i < 10; ++i) {
    StyleParams s = StyleParams::make(i, 1.5 + (i % 4) * 0.5, 0.0, 0.1 * (i % 5), 0.15 * (i % 3));
    samples.push_back(compose_scene(alpha, {std::string(1, static_cast<char>('A' + i)) + "B"},
                                    {s}, Layout::Horizontal, 50 + static_cast<uint64_t>(i), cfg));
  }
  fs::path dir = fresh_dir("roundtrip");
  std::string manifest = write_dataset(samples, dir.string());
  auto back = read_dataset(manifest);
  REQUIRE(back.size() == samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    CHECK(back[i].image == samples[i].image);  // lossless raster
    REQUIRE(back[i].text_lines.size() == samples[i].text_lines.size());
    REQUIRE(back[i].chars.size() == samples[i].chars.size());
    for (size_t t = 0; t < samples[i].text_lines.size(); ++t) {
      CHECK(back[i].text_lines[t].text == samples[i].text_lines[t].text);
      CHECK(back[i].text_lines[t].ignore == samples[i].text_lines[t].ignore);
      for (int k = 0; k < 4; ++k) {
        CHECK(back[i].text_lines[t].points.p[k].x == samples[i].text_lines[t].points.p[k].x);
        CHECK(back[i].text_lines[t].points.p[k].y == samples[i].text_lines[t].points.p[k].y);
      }
    }
    for (size_t c = 0; c < samples[i].chars.size(); ++c) {
      CHECK(back[i].chars[c].ch == samples[i].chars[c].ch);
      for (int k = 0; k < 4; ++k)
        CHECK(back[i].chars[c].points.p[k].x == samples[i].chars[c].points.p[k].x);
    }
  }
}

TEST_CASE("identical generation produces byte-identical manifests") {
  auto alpha = make_alphabet(10, 5);
  StyleParams s = StyleParams::make(0, 2.0, 0.1, 0.3, 0.2);
  SceneConfig cfg;
  cfg.image_w = 200;
  cfg.image_h = 200;
  cfg.cell_px = 40;
  std::vector<GlyphSample> v1{compose_scene(alpha, {"AB"}, {s}, Layout::Horizontal, 9, cfg)};
  std::vector<GlyphSample> v2{compose_scene(alpha, {"AB"}, {s}, Layout::Horizontal, 9, cfg)};
  fs::path d1 = fresh_dir("manifest_a"), d2 = fresh_dir("manifest_b");
  CHECK(slurp(write_dataset(v1, d1.string())) == slurp(write_dataset(v2, d2.string())));
}

TEST_CASE("read_manifest errors carry location and file names") {
  fs::path dir = fresh_dir("manifest_errors");
  fs::create_directories(dir / "images");

  // a char record with 3 points is rejected
  {
    std::ofstream f(dir / "manifest.jsonl");
    f << R"({"image":"images/000000.pgm","text_lines":[],"chars":[{"points":[[0,0],[1,0],[1,1]],"char":"A"}]})"
      << "\n";
  }
  Image im(8, 8);
  write_pgm(im, (dir / "images/000000.pgm").string());
  try {
    read_manifest((dir / "manifest.jsonl").string());
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("4 points") != std::string::npos);
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }

  // missing image file named in the error
  {
    std::ofstream f(dir / "manifest.jsonl");
    f << R"({"image":"images/nope.pgm","text_lines":[],"chars":[]})" << "\n";
  }
  try {
    read_manifest((dir / "manifest.jsonl").string());
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("images/nope.pgm") != std::string::npos);
  }
  // ... but tolerated when existence checks are off
  CHECK(read_manifest((dir / "manifest.jsonl").string(), false).size() == 1);

  // malformed JSON reports the line number
  {
    std::ofstream f(dir / "manifest.jsonl");
    f << R"({"image":"images/000000.pgm","text_lines":[],"chars":[]})" << "\n";
    f << "{not json\n";
  }
  try {
    read_manifest((dir / "manifest.jsonl").string());
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("style pool composition matches the requested counts") {
  auto pool = make_style_pool(4, 6, 2, 99);
  REQUIRE(pool.size() == 12);
  int n[3] = {0, 0, 0};
  for (const auto& s : pool) {
    s.validate();
    ++n[static_cast<int>(s.difficulty)];
  }
  CHECK(n[0] == 4);
  CHECK(n[1] == 6);
  CHECK(n[2] == 2);
  // ids unique and stable
  auto pool2 = make_style_pool(4, 6, 2, 99);
  for (size_t i = 0; i < pool.size(); ++i) {
    CHECK(pool[i].style_id == pool2[i].style_id);
    CHECK(pool[i].stroke_width == pool2[i].stroke_width);
  }
}
