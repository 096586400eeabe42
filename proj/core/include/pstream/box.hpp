#pragma once

#include <optional>
#include <string>

namespace pstream {

// Normalized center-size box. Valid boxes have their center inside the unit
// square and strictly positive extent.
struct BoundingBox {
  double cx = 0.5;
  double cy = 0.5;
  double w = 1.0;
  double h = 1.0;
  std::optional<double> score;

  double area() const noexcept { return w * h; }
  double left() const noexcept { return cx - 0.5 * w; }
  double right() const noexcept { return cx + 0.5 * w; }
  double top() const noexcept { return cy - 0.5 * h; }
  double bottom() const noexcept { return cy + 0.5 * h; }

  static BoundingBox full_frame() { return {0.5, 0.5, 1.0, 1.0, std::nullopt}; }
  static BoundingBox from_corners(double x0, double y0, double x1, double y1) {
    return {0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0, std::nullopt};
  }

  bool operator==(const BoundingBox&) const = default;
};

bool is_valid(const BoundingBox& b) noexcept;

// Throws ErrorCode::kInvalidArgument describing `what` when invalid.
void validate(const BoundingBox& b, const std::string& what);

// Intersection over union. Pure geometry: does not require normalized input.
double iou(const BoundingBox& a, const BoundingBox& b) noexcept;

}  // namespace pstream
