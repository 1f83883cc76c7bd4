#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gspot {

// 8-bit grayscale raster, row-major. Lossless on disk as binary PGM (P5).
struct Image {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> px;

  Image() = default;
  Image(int w, int h) : width(w), height(h), px(static_cast<size_t>(w) * h, 0) {}

  uint8_t& at(int y, int x) { return px[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int y, int x) const { return px[static_cast<size_t>(y) * width + x]; }

  bool operator==(const Image& o) const {
    return width == o.width && height == o.height && px == o.px;
  }
};

// RGB raster for overlays, stored as binary PPM (P6).
struct ImageRgb {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> px;  // 3 bytes per pixel

  ImageRgb() = default;
  ImageRgb(int w, int h) : width(w), height(h), px(static_cast<size_t>(w) * h * 3, 0) {}

  void set(int y, int x, uint8_t r, uint8_t g, uint8_t b) {
    size_t i = (static_cast<size_t>(y) * width + x) * 3;
    px[i] = r;
    px[i + 1] = g;
    px[i + 2] = b;
  }

  static ImageRgb from_gray(const Image& im);
};

void write_pgm(const Image& im, const std::string& path);
Image read_pgm(const std::string& path);
void write_ppm(const ImageRgb& im, const std::string& path);

}  // namespace gspot
