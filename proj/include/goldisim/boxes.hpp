#pragma once

#include <algorithm>

#include "goldisim/errors.hpp"

namespace goldisim {

// Axis-aligned box, top-left anchored. evaluable=false marks ground truth
// that predictions may match but which never counts toward TPR.
struct BoundingBox {
  int x = 0;
  int y = 0;
  int w = 1;
  int h = 1;
  bool evaluable = true;

  void validate() const {
    if (w < 1 || h < 1) throw ParameterError("BoundingBox: w,h must be >= 1");
  }
  long area() const { return static_cast<long>(w) * h; }
  bool operator==(const BoundingBox&) const = default;
};

inline long box_intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const int x0 = std::max(a.x, b.x);
  const int y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.x + a.w, b.x + b.w);
  const int y1 = std::min(a.y + a.h, b.y + b.h);
  if (x1 <= x0 || y1 <= y0) return 0;
  return static_cast<long>(x1 - x0) * (y1 - y0);
}

// 2|A∩B| / (|A|+|B|)
inline double dice(const BoundingBox& a, const BoundingBox& b) {
  a.validate();
  b.validate();
  return 2.0 * box_intersection_area(a, b) / static_cast<double>(a.area() + b.area());
}

}  // namespace goldisim
