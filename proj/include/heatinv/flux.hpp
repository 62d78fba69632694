#pragma once

#include <span>
#include <vector>

#include "heatinv/common.hpp"

namespace heatinv {

// Heat flux q(r, t) on a grid x grid partition of the footprint over nt steps,
// W/m^2. Time-major, row-major spatial. Frame k is the flux applied during
// step k (k = 0 .. nt-1).
struct FluxField {
  int nt = 0;
  int grid = kDefaultGrid;
  std::vector<double> values;

  FluxField() = default;
  FluxField(int nt_, int grid_) : nt(nt_), grid(grid_), values(static_cast<std::size_t>(nt_) * grid_ * grid_, 0.0) {}

  std::size_t frame_size() const { return static_cast<std::size_t>(grid) * grid; }
  std::span<const double> frame(int t) const { return {values.data() + t * frame_size(), frame_size()}; }
  std::span<double> frame(int t) { return {values.data() + t * frame_size(), frame_size()}; }
  double at(int t, int i, int j) const { return values[t * frame_size() + static_cast<std::size_t>(j) * grid + i]; }
  double& at(int t, int i, int j) { return values[t * frame_size() + static_cast<std::size_t>(j) * grid + i]; }
};

}  // namespace heatinv
