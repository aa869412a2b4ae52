#pragma once

#include "nsod/types.hpp"

#include <algorithm>
#include <cstdint>

namespace nsod {

inline std::int64_t intersection_area(const Box& a, const Box& b) {
  const std::int64_t w =
      std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const std::int64_t h =
      std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0 || h <= 0) return 0;
  return w * h;
}

/// Intersection over union under the half-open convention. The single
/// source of truth for box overlap everywhere in the library.
inline double iou(const Box& a, const Box& b) {
  const std::int64_t inter = intersection_area(a, b);
  if (inter == 0) return 0.0;
  const std::int64_t uni = a.area() + b.area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace nsod
