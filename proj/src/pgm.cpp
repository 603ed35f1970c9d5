#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "sgan/image.hpp"

namespace sgan {

void write_pgm16(const std::string& path, const Image& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "P5\n" << img.width << " " << img.height << "\n65535\n";
  std::vector<unsigned char> buf(img.size() * 2);
  for (size_t i = 0; i < img.size(); ++i) {
    const double v = std::clamp(img.pixels[i], 0.0, 1.0);
    const auto q = static_cast<uint16_t>(std::lround(v * 65535.0));
    buf[2 * i] = static_cast<unsigned char>(q >> 8);
    buf[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
  }
  f.write(reinterpret_cast<const char*>(buf.data()),
          static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

namespace {

// Skips whitespace and '#' comments between header tokens.
int read_header_int(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) {
    throw std::runtime_error("malformed PGM header: " + path);
  }
  int v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    c = in.get();
  }
  return v;
}

}  // namespace

Image read_pgm16(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  if (m0 != 'P' || m1 != '5') {
    if (m0 == 'P' && m1 == '2') {
      throw std::runtime_error("unsupported ASCII (P2) PGM: " + path);
    }
    throw std::runtime_error("not a binary PGM (P5) file: " + path);
  }
  const int w = read_header_int(f, path);
  const int h = read_header_int(f, path);
  const int maxval = read_header_int(f, path);
  if (maxval != 65535) {
    throw std::runtime_error("expected maxval 65535, got " +
                             std::to_string(maxval) + ": " + path);
  }
  if (w <= 0 || h <= 0) throw std::runtime_error("bad PGM size: " + path);
  Image img(h, w);
  std::vector<unsigned char> buf(img.size() * 2);
  f.read(reinterpret_cast<char*>(buf.data()),
         static_cast<std::streamsize>(buf.size()));
  if (f.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw std::runtime_error("truncated PGM data: " + path);
  }
  for (size_t i = 0; i < img.size(); ++i) {
    const uint16_t q = static_cast<uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
    img.pixels[i] = q / 65535.0;
  }
  return img;
}

}  // namespace sgan
