#pragma once

#include <cmath>
#include <utility>

#include "sot/box.hpp"
#include "sot/common.hpp"
#include "sot/grid.hpp"
#include "sot/image.hpp"

namespace sot {

/// Bookkeeping for one square crop resampled to a network input patch.
/// Maps between frame pixels, patch pixels and map cells. The patch has
/// side map_size * stride; map cell (i, j) summarizes the stride x stride
/// patch region with top-left (j * stride, i * stride).
struct PatchGeometry {
  BoundingBox crop;    // square source region, frame coordinates
  int patch_side = 0;  // pixels, == map_size * stride
  int map_size = 0;    // S
  int stride = 0;      // r

  float scale() const { return static_cast<float>(patch_side) / crop.w; }

  float frame_to_patch_x(float fx) const { return (fx - crop.x) * scale(); }
  float frame_to_patch_y(float fy) const { return (fy - crop.y) * scale(); }
  float patch_to_frame_x(float px) const { return crop.x + px / scale(); }
  float patch_to_frame_y(float py) const { return crop.y + py / scale(); }

  /// Map-cell box -> frame-pixel box (cells scale by the map stride first).
  BoundingBox map_box_to_frame(const BoundingBox& cells) const {
    const float r = static_cast<float>(stride);
    const float px = cells.x * r, py = cells.y * r;
    const float pw = cells.w * r, ph = cells.h * r;
    return {patch_to_frame_x(px), patch_to_frame_y(py), pw / scale(), ph / scale()};
  }

  /// Frame-pixel box -> map-cell box; inverse of map_box_to_frame.
  BoundingBox frame_box_to_map(const BoundingBox& frame_box) const {
    const float r = static_cast<float>(stride);
    const float px = frame_to_patch_x(frame_box.x);
    const float py = frame_to_patch_y(frame_box.y);
    const float pw = frame_box.w * scale();
    const float ph = frame_box.h * scale();
    return {px / r, py / r, pw / r, ph / r};
  }
};

namespace detail {

// Bilinear read with constant 0.5 fill outside the frame.
inline float sample_bilinear(const Frame& f, int c, float x, float y) {
  const float kFill = 0.5f;
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const float tx = x - static_cast<float>(x0);
  const float ty = y - static_cast<float>(y0);

  auto read = [&](int xi, int yi) -> float {
    return f.in_bounds(xi, yi) ? f.at(c, yi, xi) : kFill;
  };

  const float v00 = read(x0, y0);
  const float v10 = read(x0 + 1, y0);
  const float v01 = read(x0, y0 + 1);
  const float v11 = read(x0 + 1, y0 + 1);
  const float top = v00 + tx * (v10 - v00);
  const float bot = v01 + tx * (v11 - v01);
  return top + ty * (bot - top);
}

}  // namespace detail

/// Crops a square region of the frame and resamples it bilinearly to a
/// map_size*stride square patch. Regions outside the frame are filled with
/// mid-gray 0.5. When the crop equals the frame and the patch side equals
/// the frame side the patch is a bit-exact copy.
inline std::pair<Frame, PatchGeometry> crop_patch(const Frame& frame,
                                                  const BoundingBox& crop,
                                                  int map_size, int stride) {
  if (!crop.valid() || std::abs(crop.w - crop.h) > 1e-4f * crop.w) {
    throw ContractError("crop_patch: crop must be square with positive side");
  }
  if (map_size < 1 || stride < 1) {
    throw ContractError("crop_patch: map size and stride must be positive");
  }
  const int side = map_size * stride;
  Frame patch(side, side, frame.channels);
  PatchGeometry geom{crop, side, map_size, stride};

  const float inv_scale = crop.w / static_cast<float>(side);
  for (int c = 0; c < frame.channels; ++c) {
    for (int py = 0; py < side; ++py) {
      // patch pixel centers at (px + 0.5, py + 0.5)
      const float fy = crop.y + (static_cast<float>(py) + 0.5f) * inv_scale - 0.5f;
      for (int px = 0; px < side; ++px) {
        const float fx = crop.x + (static_cast<float>(px) + 0.5f) * inv_scale - 0.5f;
        patch.at(c, py, px) = detail::sample_bilinear(frame, c, fx, fy);
      }
    }
  }
  return {std::move(patch), geom};
}

/// Binary target map for a patch: cell (i, j) is 1 iff its center, mapped to
/// frame coordinates, lands inside the half-open target box
/// [x, x+w) x [y, y+h). Cell centers sit at patch coords
/// (stride*(j+1/2), stride*(i+1/2)).
inline TargetMap render_target_map(const PatchGeometry& geom,
                                   const BoundingBox& target) {
  const int s = geom.map_size;
  TargetMap map(s);
  const float r = static_cast<float>(geom.stride);
  for (int i = 0; i < s; ++i) {
    const float py = r * (static_cast<float>(i) + 0.5f);
    const float fy = geom.patch_to_frame_y(py);
    const bool row_in = fy >= target.y && fy < target.bottom();
    if (!row_in) continue;
    for (int j = 0; j < s; ++j) {
      const float px = r * (static_cast<float>(j) + 0.5f);
      const float fx = geom.patch_to_frame_x(px);
      if (fx >= target.x && fx < target.right()) map.at(i, j) = 1;
    }
  }
  return map;
}

}  // namespace sot
