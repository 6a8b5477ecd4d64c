#pragma once

#include <algorithm>
#include <cmath>

#include "sot/common.hpp"

namespace sot {

/// Axis-aligned rectangle. Top-left corner (x, y), extents (w, h) > 0.
/// Units are frame pixels or map cells depending on context.
struct BoundingBox {
  float x = 0.0f;
  float y = 0.0f;
  float w = 0.0f;
  float h = 0.0f;

  float right() const { return x + w; }
  float bottom() const { return y + h; }
  float center_x() const { return x + 0.5f * w; }
  float center_y() const { return y + 0.5f * h; }
  float area() const { return w * h; }

  bool valid() const {
    return w > 0.0f && h > 0.0f && std::isfinite(x) && std::isfinite(y) &&
           std::isfinite(w) && std::isfinite(h);
  }

  static BoundingBox from_center(float cx, float cy, float w, float h) {
    return {cx - 0.5f * w, cy - 0.5f * h, w, h};
  }

  bool operator==(const BoundingBox&) const = default;
};

/// Intersection over union in [0, 1]. Disjoint boxes score 0, identical 1.
inline float iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::max(0.0, double(std::min(a.right(), b.right())) -
                                      double(std::max(a.x, b.x)));
  const double iy = std::max(0.0, double(std::min(a.bottom(), b.bottom())) -
                                      double(std::max(a.y, b.y)));
  const double inter = ix * iy;
  if (inter <= 0.0) return 0.0f;
  const double uni = double(a.area()) + double(b.area()) - inter;
  return static_cast<float>(inter / uni);
}

/// Euclidean distance in pixels between the two box centers.
inline float center_error(const BoundingBox& a, const BoundingBox& b) {
  const double dx = double(a.center_x()) - double(b.center_x());
  const double dy = double(a.center_y()) - double(b.center_y());
  return static_cast<float>(std::sqrt(dx * dx + dy * dy));
}

}  // namespace sot
