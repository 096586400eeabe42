#include "pstream/box.hpp"

#include <algorithm>
#include <cmath>

#include "pstream/error.hpp"

namespace pstream {

bool is_valid(const BoundingBox& b) noexcept {
  const bool finite = std::isfinite(b.cx) && std::isfinite(b.cy) && std::isfinite(b.w) &&
                      std::isfinite(b.h) && (!b.score || std::isfinite(*b.score));
  return finite && b.cx >= 0.0 && b.cx <= 1.0 && b.cy >= 0.0 && b.cy <= 1.0 && b.w > 0.0 &&
         b.h > 0.0;
}

void validate(const BoundingBox& b, const std::string& what) {
  if (!is_valid(b)) {
    throw Error(ErrorCode::kInvalidArgument,
                what + " is not a valid box (cx=" + std::to_string(b.cx) + ", cy=" +
                    std::to_string(b.cy) + ", w=" + std::to_string(b.w) +
                    ", h=" + std::to_string(b.h) + ")");
  }
}

double iou(const BoundingBox& a, const BoundingBox& b) noexcept {
  const double ix = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.left(), b.left()));
  const double iy = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top()));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace pstream
