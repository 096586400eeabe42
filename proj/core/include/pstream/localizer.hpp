#pragma once

#include <cstddef>
#include <vector>

#include "pstream/box.hpp"
#include "pstream/numerics.hpp"

namespace pstream {

struct GridCell {
  std::size_t i = 0;  // column
  std::size_t j = 0;  // row
  bool operator==(const GridCell&) const = default;
};

struct AttendedGrid {
  GridCell cell;
  double weight = 0.0;
};

struct LocalizationResult {
  std::size_t frame_index = 0;
  std::vector<BoundingBox> selected;
  std::vector<AttendedGrid> attended_grids;
  // Set when no proposal centre fell inside an attended grid.
  bool fallback = false;
};

// The K cells with the highest error, in descending order. Ranking uses the
// raw error so ties are decided by raster order irrespective of softmax
// underflow; the reported weights are the softmax of the whole map.
std::vector<AttendedGrid> top_k_grids(const SpatialMap& error_map, std::size_t k);

// The cell containing the box centre. Cells are half-open, except that the
// last row and column also own centres lying exactly on 1.0.
GridCell cell_of(const BoundingBox& box, std::size_t grid_width, std::size_t grid_height);

bool grid_membership(const BoundingBox& box, GridCell cell, std::size_t grid_width,
                     std::size_t grid_height);

// Collects up to `max_boxes` proposals grid by grid, in attended order. Within
// a grid: higher score first, then larger area, then raster order of the
// centre, then input order.
LocalizationResult localize(const SpatialMap& error_map, const std::vector<BoundingBox>& proposals,
                            std::size_t k, std::size_t max_boxes);

}  // namespace pstream
