#pragma once

#include <string>
#include <vector>

#include "uls/linalg.hpp"

namespace uls {

// Grayscale image, row-major, intensities in [0, 1].
struct Image {
  Index height = 0;
  Index width = 0;
  std::vector<double> pixels;

  static Image filled(Index height, Index width, double value = 0.0);

  Index size() const { return height * width; }
  double at(Index row, Index col) const { return pixels[static_cast<std::size_t>(row * width + col)]; }
  double& at(Index row, Index col) { return pixels[static_cast<std::size_t>(row * width + col)]; }
};

// Binary PGM (P5, maxval <= 255). Values are scaled by 1/maxval on load and
// quantized to round(255 v) on save, so 8-bit files round-trip exactly.
// Both throw IoError.
Image read_pgm(const std::string& path);
void write_pgm(const Image& img, const std::string& path);

// P6 overlay: red = truth, green = reconstruction, blue = 0.
void write_overlay_ppm(const Image& truth, const Image& reconstruction,
                       const std::string& path);

// Smooth blobs over a faint grid of lines, deterministic.
Image procedural_image(Index height, Index width);

}  // namespace uls
