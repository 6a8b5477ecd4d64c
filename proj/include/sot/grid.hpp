#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sot/common.hpp"
#include "sot/image.hpp"

namespace sot {

/// S x S grid of per-cell object probabilities. Row-major; cell (i, j) is
/// row i (y), column j (x).
struct ProbabilityMap {
  int size = 0;
  std::vector<float> values;  // size * size

  ProbabilityMap() = default;
  explicit ProbabilityMap(int s, float fill = 0.0f)
      : size(s), values(static_cast<std::size_t>(s) * s, fill) {}

  float& at(int i, int j) { return values[static_cast<std::size_t>(i) * size + j]; }
  float at(int i, int j) const { return values[static_cast<std::size_t>(i) * size + j]; }

  /// Total mass, 64-bit accumulation.
  double total() const {
    double s = 0.0;
    for (float v : values) s += v;
    return s;
  }
};

/// Binary training target, same layout as ProbabilityMap.
struct TargetMap {
  int size = 0;
  std::vector<std::uint8_t> values;

  TargetMap() = default;
  explicit TargetMap(int s, std::uint8_t fill = 0)
      : size(s), values(static_cast<std::size_t>(s) * s, fill) {}

  std::uint8_t& at(int i, int j) { return values[static_cast<std::size_t>(i) * size + j]; }
  std::uint8_t at(int i, int j) const { return values[static_cast<std::size_t>(i) * size + j]; }

  int count_positive() const {
    int n = 0;
    for (auto v : values) n += v;
    return n;
  }
};

/// (S+1) x (S+1) cumulative sum grid with a zero border row/column, 64-bit
/// accumulation. I(i, j) = sum of map cells with row < i and column < j.
struct IntegralImage {
  int size = 0;                // S of the source map
  std::vector<double> sums;    // (S+1) * (S+1)

  double at(int i, int j) const {
    return sums[static_cast<std::size_t>(i) * (size + 1) + j];
  }
};

inline IntegralImage integral(const ProbabilityMap& map) {
  const int s = map.size;
  IntegralImage ii;
  ii.size = s;
  ii.sums.assign(static_cast<std::size_t>(s + 1) * (s + 1), 0.0);
  for (int i = 0; i < s; ++i) {
    double row = 0.0;
    for (int j = 0; j < s; ++j) {
      row += map.at(i, j);
      ii.sums[static_cast<std::size_t>(i + 1) * (s + 1) + (j + 1)] =
          ii.at(i, j + 1) + row;
    }
  }
  return ii;
}

/// Integer cell box for integral-image queries: column x, row y, w x h cells.
struct CellBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  int area() const { return w * h; }
  bool operator==(const CellBox&) const = default;
};

/// Sum of map cells inside `box`, O(1) via four integral lookups.
inline double box_sum(const IntegralImage& ii, const CellBox& box) {
  if (box.w < 1 || box.h < 1 || box.x < 0 || box.y < 0 ||
      box.x + box.w > ii.size || box.y + box.h > ii.size) {
    throw BoundsError("box_sum: box (" + std::to_string(box.x) + "," +
                      std::to_string(box.y) + "," + std::to_string(box.w) + "," +
                      std::to_string(box.h) + ") outside " +
                      std::to_string(ii.size) + "x" + std::to_string(ii.size) +
                      " grid");
  }
  return ii.at(box.y + box.h, box.x + box.w) - ii.at(box.y, box.x + box.w) -
         ii.at(box.y + box.h, box.x) + ii.at(box.y, box.x);
}

/// Debug dump: probability map as PGM, value*255 rounded half-up.
inline void save_map_pgm(const ProbabilityMap& map, const std::string& path) {
  Frame f(map.size, map.size, 1);
  for (int i = 0; i < map.size; ++i)
    for (int j = 0; j < map.size; ++j) f.at(0, i, j) = map.at(i, j);
  save_pnm(f, path);
}

}  // namespace sot
