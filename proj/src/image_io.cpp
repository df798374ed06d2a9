#include "uls/image.hpp"

#include <algorithm>
#include <cerrno>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "uls/errors.hpp"

namespace uls {

Image Image::filled(Index height, Index width, double value) {
  if (height < 1 || width < 1) {
    throw ConfigInvalid("image dimensions must be positive");
  }
  Image img;
  img.height = height;
  img.width = width;
  img.pixels.assign(static_cast<std::size_t>(height * width), value);
  return img;
}

namespace {

unsigned char quantize(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Next header token, skipping whitespace and '#' comments.
std::string header_token(std::istream& in) {
  std::string token;
  int c = in.get();
  while (in) {
    if (c == '#') {
      while (in && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (in && !std::isspace(c) && c != '#') {
    token.push_back(static_cast<char>(c));
    c = in.get();
  }
  // Exactly one whitespace byte separates maxval from the raster; it was
  // consumed above.
  if (c == '#') in.unget();
  return token;
}

Index parse_header_int(std::istream& in, const std::string& path) {
  const std::string token = header_token(in);
  try {
    std::size_t used = 0;
    const long long v = std::stoll(token, &used);
    if (used != token.size() || v < 1) throw std::invalid_argument(token);
    return static_cast<Index>(v);
  } catch (const std::exception&) {
    throw IoError("'" + path + "': malformed PGM header");
  }
}

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open '" + path + "' for writing: " + std::strerror(errno));
  }
  return out;
}

}  // namespace

Image read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open '" + path + "': " + std::strerror(errno));
  }
  if (header_token(in) != "P5") {
    throw IoError("'" + path + "': not a binary PGM (P5) file");
  }
  const Index width = parse_header_int(in, path);
  const Index height = parse_header_int(in, path);
  const Index maxval = parse_header_int(in, path);
  if (maxval > 255) {
    throw IoError("'" + path + "': only 8-bit PGM is supported");
  }
  std::vector<unsigned char> raw(static_cast<std::size_t>(width * height));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw IoError("'" + path + "': truncated raster");
  }
  Image img = Image::filled(height, width);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    img.pixels[i] = std::min(1.0, raw[i] / static_cast<double>(maxval));
  }
  return img;
}

void write_pgm(const Image& img, const std::string& path) {
  std::ofstream out = open_for_write(path);
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> raw(img.pixels.size());
  std::transform(img.pixels.begin(), img.pixels.end(), raw.begin(), quantize);
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("write to '" + path + "' failed");
}

void write_overlay_ppm(const Image& truth, const Image& reconstruction,
                       const std::string& path) {
  if (truth.height != reconstruction.height || truth.width != reconstruction.width) {
    throw DimensionMismatch("overlay: image sizes differ");
  }
  std::ofstream out = open_for_write(path);
  out << "P6\n" << truth.width << ' ' << truth.height << "\n255\n";
  std::vector<unsigned char> raw;
  raw.reserve(truth.pixels.size() * 3);
  for (std::size_t i = 0; i < truth.pixels.size(); ++i) {
    raw.push_back(quantize(truth.pixels[i]));
    raw.push_back(quantize(reconstruction.pixels[i]));
    raw.push_back(0);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("write to '" + path + "' failed");
}

Image procedural_image(Index height, Index width) {
  Image img = Image::filled(height, width);
  struct Blob {
    double row, col, radius, weight;
  };
  // Positions relative to the image size.
  const Blob blobs[] = {{0.30, 0.28, 0.16, 0.9}, {0.62, 0.70, 0.20, 0.75},
                        {0.75, 0.25, 0.10, 0.6}, {0.22, 0.72, 0.09, 0.5}};
  const double h = static_cast<double>(height);
  const double w = static_cast<double>(width);
  const Index spacing = std::max<Index>(4, std::min(height, width) / 8);
  for (Index r = 0; r < height; ++r) {
    for (Index c = 0; c < width; ++c) {
      double v = 0.1;
      for (const Blob& b : blobs) {
        const double dr = (r - b.row * h) / (b.radius * h);
        const double dc = (c - b.col * w) / (b.radius * w);
        v += b.weight * std::exp(-0.5 * (dr * dr + dc * dc));
      }
      if (r % spacing == 0 || c % spacing == 0) v += 0.25;
      img.at(r, c) = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

}  // namespace uls
