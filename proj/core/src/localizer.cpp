#include "pstream/localizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "pstream/error.hpp"

namespace pstream {

std::vector<AttendedGrid> top_k_grids(const SpatialMap& error_map, std::size_t k) {
  const std::size_t cells = error_map.cells();
  if (k < 1 || k > cells) {
    throw Error(ErrorCode::kInvalidArgument, "K=" + std::to_string(k) + " outside [1, " +
                                                 std::to_string(cells) + "] grid cells");
  }
  const SpatialMap weights = softmax_spatial(error_map);
  std::vector<std::size_t> order(cells);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return error_map[a] > error_map[b];
  });
  std::vector<AttendedGrid> out;
  out.reserve(k);
  for (std::size_t n = 0; n < k; ++n) {
    const std::size_t r = order[n];
    out.push_back({{r % error_map.width(), r / error_map.width()}, weights[r]});
  }
  return out;
}

GridCell cell_of(const BoundingBox& box, std::size_t grid_width, std::size_t grid_height) {
  auto index = [](double coord, std::size_t extent) {
    const double scaled = coord * static_cast<double>(extent);
    const auto last = static_cast<double>(extent - 1);
    return static_cast<std::size_t>(std::clamp(std::floor(scaled), 0.0, last));
  };
  return {index(box.cx, grid_width), index(box.cy, grid_height)};
}

bool grid_membership(const BoundingBox& box, GridCell cell, std::size_t grid_width,
                     std::size_t grid_height) {
  return cell_of(box, grid_width, grid_height) == cell;
}

namespace {

// Strict weak order for proposals sharing a grid cell.
bool ranks_before(const BoundingBox& a, std::size_t ia, const BoundingBox& b, std::size_t ib) {
  const double sa = a.score.value_or(0.0);
  const double sb = b.score.value_or(0.0);
  if (sa != sb) return sa > sb;
  if (a.area() != b.area()) return a.area() > b.area();
  if (a.cy != b.cy) return a.cy < b.cy;
  if (a.cx != b.cx) return a.cx < b.cx;
  return ia < ib;
}

}  // namespace

LocalizationResult localize(const SpatialMap& error_map, const std::vector<BoundingBox>& proposals,
                            std::size_t k, std::size_t max_boxes) {
  if (max_boxes < 1) {
    throw Error(ErrorCode::kInvalidArgument, "N must be at least 1");
  }
  const std::size_t width = error_map.width();
  const std::size_t height = error_map.height();

  LocalizationResult result;
  result.attended_grids = top_k_grids(error_map, k);

  std::vector<std::vector<std::size_t>> by_cell(width * height);
  for (std::size_t p = 0; p < proposals.size(); ++p) {
    const GridCell c = cell_of(proposals[p], width, height);
    by_cell[c.j * width + c.i].push_back(p);
  }

  for (const auto& grid : result.attended_grids) {
    if (result.selected.size() >= max_boxes) break;
    auto members = by_cell[grid.cell.j * width + grid.cell.i];
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return ranks_before(proposals[a], a, proposals[b], b);
    });
    for (std::size_t p : members) {
      if (result.selected.size() >= max_boxes) break;
      result.selected.push_back(proposals[p]);
    }
  }
  if (!result.selected.empty()) return result;

  result.fallback = true;
  const GridCell top = result.attended_grids.front().cell;
  const double tx = static_cast<double>(top.i) + 0.5;
  const double ty = static_cast<double>(top.j) + 0.5;
  if (proposals.empty()) {
    const double cw = 1.0 / static_cast<double>(width);
    const double ch = 1.0 / static_cast<double>(height);
    result.selected.push_back({tx * cw, ty * ch, cw, ch, std::nullopt});
    return result;
  }
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_index = 0;
  for (std::size_t p = 0; p < proposals.size(); ++p) {
    const double dx = proposals[p].cx * static_cast<double>(width) - tx;
    const double dy = proposals[p].cy * static_cast<double>(height) - ty;
    const double dist = dx * dx + dy * dy;
    if (dist < best) {
      best = dist;
      best_index = p;
    }
  }
  result.selected.push_back(proposals[best_index]);
  return result;
}

}  // namespace pstream
