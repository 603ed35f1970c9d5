#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sgan {

// Grayscale image, intensities nominally in [0, 1], row-major.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), pixels(static_cast<size_t>(h) * w, fill) {}

  double& at(int y, int x) { return pixels[static_cast<size_t>(y) * width + x]; }
  double at(int y, int x) const {
    return pixels[static_cast<size_t>(y) * width + x];
  }
  size_t size() const { return pixels.size(); }
};

// 16-bit binary PGM (P5, maxval 65535, big-endian samples). Intensities are
// mapped linearly between [0, 1] and [0, 65535].
void write_pgm16(const std::string& path, const Image& img);
Image read_pgm16(const std::string& path);

}  // namespace sgan
