#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "sot/box.hpp"
#include "sot/common.hpp"
#include "sot/grid.hpp"
#include "sot/patch.hpp"

namespace sot {

/// Knobs for turning probability maps into a box estimate.
struct InferenceConfig {
  // density thresholds for center determination
  std::vector<float> tau1_sweep = {0.10f, 0.15f, 0.20f, 0.25f, 0.30f,
                                   0.35f, 0.40f, 0.45f, 0.50f, 0.55f,
                                   0.60f, 0.65f, 0.70f};
  // box-score offsets, averaged for robust size estimation
  std::vector<float> epsilon_sweep = {0.550f, 0.575f, 0.600f};
  // crop side = factor * max(w, h) of the previous box, smallest first
  std::vector<float> search_scales = {1.2f, 1.5f, 1.9f, 2.4f};
  // candidate sizes relative to the previous box size
  std::vector<float> size_factors = {0.85f, 0.925f, 1.0f, 1.08f, 1.17f};
  // scale accepted when the map total exceeds tau_search_mean * S^2
  float tau_search_mean = 0.04f;

  void validate() const {
    if (tau1_sweep.empty() || epsilon_sweep.empty() || search_scales.empty() ||
        size_factors.empty())
      throw ConfigError("inference sweeps must be non-empty");
    float prev = 0.0f;
    for (float f : search_scales) {
      if (!(f > prev))
        throw ConfigError("search scales must be strictly ascending and > 0");
      prev = f;
    }
    for (float f : size_factors)
      if (!(f > 0.0f)) throw ConfigError("size factors must be > 0");
    if (!(tau_search_mean > 0.0f))
      throw ConfigError("tau_search_mean must be > 0");
  }

  double tau_search(int map_size) const {
    return double(tau_search_mean) * map_size * map_size;
  }

  bool operator==(const InferenceConfig&) const = default;
};

/// Box estimate for one frame, in frame coordinates. When the target is
/// missing the box repeats the previous estimate and confidence is 0.
struct BoxEstimate {
  BoundingBox box;
  float confidence = 0.0f;
  int scale_index = -1;
  bool missing = true;
  CellBox map_box;  // rasterized winning box in map cells (valid when found)
};

/// First (smallest) scale whose map total exceeds tau_search, or nullopt
/// when no scale fires.
inline std::optional<std::size_t> select_search_scale(
    std::span<const ProbabilityMap> maps, double tau_search) {
  if (maps.empty()) throw ContractError("select_search_scale: no maps");
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].total() > tau_search) return i;
  }
  return std::nullopt;
}

struct CellPoint {
  float x = 0.0f;  // column
  float y = 0.0f;  // row
};

/// Density-based center: for every threshold in the sweep that at least one
/// cell reaches, take the tight bounding box of all cells >= tau and record
/// its center; the result is the mean center over contributing thresholds.
/// Falls back to the map center when no threshold contributes.
inline CellPoint determine_center(const ProbabilityMap& map,
                                  std::span<const float> tau1_sweep) {
  const int s = map.size;
  double sum_x = 0.0, sum_y = 0.0;
  int contributing = 0;
  for (float tau : tau1_sweep) {
    int min_i = s, max_i = -1, min_j = s, max_j = -1;
    for (int i = 0; i < s; ++i) {
      for (int j = 0; j < s; ++j) {
        if (map.at(i, j) >= tau) {
          min_i = std::min(min_i, i);
          max_i = std::max(max_i, i);
          min_j = std::min(min_j, j);
          max_j = std::max(max_j, j);
        }
      }
    }
    if (max_i < 0) continue;
    // tight box spans cells [min, max]; center in cell coordinates
    sum_x += min_j + 0.5 * (max_j - min_j + 1);
    sum_y += min_i + 0.5 * (max_i - min_i + 1);
    ++contributing;
  }
  if (contributing == 0) {
    return {static_cast<float>(s) / 2.0f, static_cast<float>(s) / 2.0f};
  }
  return {static_cast<float>(sum_x / contributing),
          static_cast<float>(sum_y / contributing)};
}

/// Box score c = (sum_box(p) - eps * w * h) * w * h.
inline double score_box(const IntegralImage& ii, const CellBox& box,
                        double eps) {
  const double area = double(box.w) * double(box.h);
  return (box_sum(ii, box) - eps * area) * area;
}

namespace detail {

inline constexpr int kCenterRefine = 2;  // +/- cells around the center

// Argmax of score_box over the candidate set for one epsilon. Ties break to
// the smaller area, then lexicographically by (x, y).
inline CellBox best_candidate(const IntegralImage& ii, const CellPoint& center,
                              float prev_w, float prev_h,
                              std::span<const float> size_factors, double eps) {
  const int s = ii.size;
  bool have = false;
  CellBox best{};
  double best_score = 0.0;
  for (float f : size_factors) {
    const int w = std::clamp(static_cast<int>(std::lround(prev_w * f)), 1, s);
    const int h = std::clamp(static_cast<int>(std::lround(prev_h * f)), 1, s);
    const int base_x = static_cast<int>(std::lround(center.x - 0.5 * w));
    const int base_y = static_cast<int>(std::lround(center.y - 0.5 * h));
    for (int dy = -kCenterRefine; dy <= kCenterRefine; ++dy) {
      for (int dx = -kCenterRefine; dx <= kCenterRefine; ++dx) {
        CellBox cand{std::clamp(base_x + dx, 0, s - w),
                     std::clamp(base_y + dy, 0, s - h), w, h};
        const double sc = score_box(ii, cand, eps);
        bool better = false;
        if (!have || sc > best_score) {
          better = true;
        } else if (sc == best_score) {
          if (cand.area() < best.area()) {
            better = true;
          } else if (cand.area() == best.area() &&
                     (cand.x < best.x || (cand.x == best.x && cand.y < best.y))) {
            better = true;
          }
        }
        if (better) {
          have = true;
          best = cand;
          best_score = sc;
        }
      }
    }
  }
  return best;
}

}  // namespace detail

/// Size search around a fixed center: per epsilon, pick the best-scoring
/// candidate (previous size times each size factor, center refined +/- 2
/// cells, clipped to the grid), then average the winners coordinate-wise
/// over the epsilon sweep. Returns a fractional box in map cells.
inline BoundingBox best_box_given_center(const ProbabilityMap& map,
                                         const CellPoint& center, float prev_w,
                                         float prev_h,
                                         const InferenceConfig& cfg) {
  if (!(prev_w > 0.0f) || !(prev_h > 0.0f))
    throw ContractError("best_box_given_center: previous size must be positive");
  const IntegralImage ii = integral(map);
  double x = 0.0, y = 0.0, w = 0.0, h = 0.0;
  for (float eps : cfg.epsilon_sweep) {
    const CellBox b = detail::best_candidate(ii, center, prev_w, prev_h,
                                             cfg.size_factors, eps);
    x += b.x;
    y += b.y;
    w += b.w;
    h += b.h;
  }
  const double n = static_cast<double>(cfg.epsilon_sweep.size());
  return {static_cast<float>(x / n), static_cast<float>(y / n),
          static_cast<float>(w / n), static_cast<float>(h / n)};
}

/// Nearest integer-cell box of a fractional cell box, clipped to the grid.
inline CellBox rasterize_cell_box(const BoundingBox& b, int map_size) {
  int w = std::clamp(static_cast<int>(std::lround(b.w)), 1, map_size);
  int h = std::clamp(static_cast<int>(std::lround(b.h)), 1, map_size);
  const int x = std::clamp(static_cast<int>(std::lround(b.x)), 0, map_size - w);
  const int y = std::clamp(static_cast<int>(std::lround(b.y)), 0, map_size - h);
  return {x, y, w, h};
}

/// Full per-network estimate: scale selection, center determination, size
/// search, and mapping back to frame coordinates. Confidence is the mean
/// probability inside the rasterized winning map box.
inline BoxEstimate estimate(std::span<const ProbabilityMap> maps,
                            std::span<const PatchGeometry> geoms,
                            const BoundingBox& previous,
                            const InferenceConfig& cfg) {
  if (maps.size() != geoms.size() || maps.empty())
    throw ContractError("estimate: maps and geometries must align");
  const int s = maps[0].size;
  const auto idx = select_search_scale(maps, cfg.tau_search(s));
  if (!idx) {
    return BoxEstimate{previous, 0.0f, -1, true, {}};
  }
  const ProbabilityMap& map = maps[*idx];
  const PatchGeometry& geom = geoms[*idx];

  const CellPoint center = determine_center(map, cfg.tau1_sweep);
  const BoundingBox prev_cells = geom.frame_box_to_map(previous);
  const BoundingBox cell_box =
      best_box_given_center(map, center, prev_cells.w, prev_cells.h, cfg);

  const CellBox raster = rasterize_cell_box(cell_box, s);
  const double conf = box_sum(integral(map), raster) / raster.area();
  return BoxEstimate{geom.map_box_to_frame(cell_box),
                     static_cast<float>(conf), static_cast<int>(*idx), false,
                     raster};
}

}  // namespace sot
