#include "gspot/image.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace gspot {

ImageRgb ImageRgb::from_gray(const Image& im) {
  ImageRgb out(im.width, im.height);
  for (size_t i = 0; i < im.px.size(); ++i) {
    out.px[3 * i] = im.px[i];
    out.px[3 * i + 1] = im.px[i];
    out.px[3 * i + 2] = im.px[i];
  }
  return out;
}

void write_pgm(const Image& im, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_pgm: cannot open " + path);
  f << "P5\n" << im.width << " " << im.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(im.px.data()),
          static_cast<std::streamsize>(im.px.size()));
  if (!f) throw std::runtime_error("write_pgm: write failed for " + path);
}

namespace {
int read_pnm_int(std::istream& f) {
  // skips whitespace and '#' comments
  int c = f.get();
  while (c == '#' || std::isspace(c)) {
    if (c == '#')
      while (c != '\n' && c != EOF) c = f.get();
    c = f.get();
  }
  int v = 0;
  bool any = false;
  while (std::isdigit(c)) {
    v = v * 10 + (c - '0');
    any = true;
    c = f.get();
  }
  if (!any) throw std::runtime_error("read_pgm: malformed header");
  return v;
}
}  // namespace

Image read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_pgm: cannot open " + path);
  char m0 = static_cast<char>(f.get());
  char m1 = static_cast<char>(f.get());
  if (m0 != 'P' || m1 != '5') throw std::runtime_error("read_pgm: not a P5 PGM: " + path);
  const int w = read_pnm_int(f);
  const int h = read_pnm_int(f);
  const int maxv = read_pnm_int(f);
  if (maxv != 255) throw std::runtime_error("read_pgm: only maxval 255 supported: " + path);
  Image im(w, h);
  f.read(reinterpret_cast<char*>(im.px.data()), static_cast<std::streamsize>(im.px.size()));
  if (f.gcount() != static_cast<std::streamsize>(im.px.size()))
    throw std::runtime_error("read_pgm: truncated pixel data: " + path);
  return im;
}

void write_ppm(const ImageRgb& im, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
  f << "P6\n" << im.width << " " << im.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(im.px.data()),
          static_cast<std::streamsize>(im.px.size()));
  if (!f) throw std::runtime_error("write_ppm: write failed for " + path);
}

}  // namespace gspot
