#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "patchnet/error.hpp"
#include "patchnet/kv.hpp"

namespace patchnet {

// Row-major raster with 1 (gray) or 3 (rgb, interleaved) channels.
// Pixel values live in [0, 1]; file IO maps linearly to 8-bit PGM/PPM.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> pixels;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c = 1)
      : width(w), height(h), channels(c),
        pixels(static_cast<size_t>(w) * h * c, 0.0) {
    require(w > 0 && h > 0 && (c == 1 || c == 3), ErrorCode::InvariantViolation,
            "image dimensions must be positive with 1 or 3 channels");
  }

  double& at(int x, int y, int c = 0) {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c = 0) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }

  size_t size() const { return pixels.size(); }

  void clamp01() {
    for (double& v : pixels) v = std::clamp(v, 0.0, 1.0);
  }
};

inline ImageBuffer flip_horizontal(const ImageBuffer& img) {
  ImageBuffer out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(x, y, c) = img.at(img.width - 1 - x, y, c);
  return out;
}

// Binary PGM (P5) / PPM (P6), maxval 255. Quantization rounds to nearest.
inline void write_pnm(const ImageBuffer& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::MissingFile, "cannot write " + path);
  out << (img.channels == 1 ? "P5" : "P6") << "\n"
      << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(img.width) * img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double v = std::clamp(img.at(x, y, c), 0.0, 1.0);
        row[static_cast<size_t>(x) * img.channels + c] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  require(out.good(), ErrorCode::MissingFile, "short write to " + path);
}

namespace detail {
inline int pnm_token(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comments between header tokens.
  while (true) {
    int ch = in.peek();
    require(ch != EOF, ErrorCode::BadInput, path + ": truncated header");
    if (std::isspace(ch)) {
      in.get();
    } else if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else {
      break;
    }
  }
  int value = 0;
  in >> value;
  require(in.good(), ErrorCode::BadInput, path + ": bad header token");
  return value;
}
}  // namespace detail

inline ImageBuffer read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::MissingFile, "cannot open " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  require(m0 == 'P' && (m1 == '5' || m1 == '6'), ErrorCode::BadInput,
          path + ": not a binary PGM/PPM file");
  int channels = (m1 == '5') ? 1 : 3;
  int w = detail::pnm_token(in, path);
  int h = detail::pnm_token(in, path);
  int maxval = detail::pnm_token(in, path);
  require(maxval == 255, ErrorCode::BadInput, path + ": expected maxval 255");
  in.get();  // single whitespace after maxval
  ImageBuffer img(w, h, channels);
  std::vector<unsigned char> raw(static_cast<size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  require(in.gcount() == static_cast<std::streamsize>(raw.size()),
          ErrorCode::BadInput, path + ": truncated pixel data");
  for (size_t i = 0; i < raw.size(); ++i) img.pixels[i] = raw[i] / 255.0;
  return img;
}

}  // namespace patchnet
