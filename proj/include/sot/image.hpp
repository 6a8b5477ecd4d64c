#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "sot/common.hpp"

namespace sot {

/// Planar (channel-major) image with float pixels in [0, 1].
/// Channel count is 1 (gray) or 3 (RGB).
struct Frame {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> pixels;  // channels * height * width, CHW

  Frame() = default;
  Frame(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c),
        pixels(static_cast<std::size_t>(c) * h * w, fill) {}

  float& at(int c, int y, int x) {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
};

namespace detail {

inline int pnm_read_token(std::istream& in, std::string& tok) {
  tok.clear();
  int c = in.get();
  // skip whitespace and '#' comment lines
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  return c;
}

inline int pnm_read_int(std::istream& in, const std::string& path,
                        const char* what) {
  std::string tok;
  pnm_read_token(in, tok);
  try {
    std::size_t used = 0;
    int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw IoError(path + ": bad " + what + " field '" + tok + "'");
  }
}

}  // namespace detail

/// Loads a binary PPM (P6, 3 channels) or PGM (P5, 1 channel), 8-bit.
/// Pixel values are scaled to [0, 1] by division by 255.
inline Frame load_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open");
  std::string magic;
  detail::pnm_read_token(in, magic);
  int channels;
  if (magic == "P6") {
    channels = 3;
  } else if (magic == "P5") {
    channels = 1;
  } else {
    throw IoError(path + ": unsupported magic '" + magic + "' (want P5/P6)");
  }
  const int width = detail::pnm_read_int(in, path, "width");
  const int height = detail::pnm_read_int(in, path, "height");
  const int maxval = detail::pnm_read_int(in, path, "maxval");
  if (width < 1 || height < 1) throw IoError(path + ": bad dimensions");
  if (maxval != 255) throw IoError(path + ": only maxval 255 supported");

  const std::size_t n = static_cast<std::size_t>(width) * height * channels;
  std::vector<std::uint8_t> raw(n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw IoError(path + ": truncated pixel data");
  }

  Frame f(width, height, channels);
  // interleaved on disk -> planar in memory
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        const std::uint8_t b =
            raw[(static_cast<std::size_t>(y) * width + x) * channels + c];
        f.at(c, y, x) = static_cast<float>(b) / 255.0f;
      }
    }
  }
  return f;
}

inline void save_pnm(const Frame& f, const std::string& path) {
  if (f.channels != 1 && f.channels != 3) {
    throw ContractError("save_pnm: channel count must be 1 or 3");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << (f.channels == 3 ? "P6" : "P5") << "\n"
      << f.width << " " << f.height << "\n255\n";
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(f.width) * f.height *
                                f.channels);
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      for (int c = 0; c < f.channels; ++c) {
        float v = std::min(1.0f, std::max(0.0f, f.at(c, y, x)));
        // round half-up
        raw[(static_cast<std::size_t>(y) * f.width + x) * f.channels + c] =
            static_cast<std::uint8_t>(std::floor(v * 255.0f + 0.5f));
      }
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError(path + ": write failed");
}

}  // namespace sot
