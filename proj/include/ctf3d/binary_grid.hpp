#pragma once

#include <cstdint>
#include <vector>

namespace ctf3d {

/// Row-major 0/1 grid used for mask morphology and component labeling.
struct BinaryGrid {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> cells;

  BinaryGrid() = default;
  BinaryGrid(int w, int h) : width(w), height(h), cells(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t at(int c, int r) const { return cells[static_cast<std::size_t>(r) * width + c]; }
  std::uint8_t& at(int c, int r) { return cells[static_cast<std::size_t>(r) * width + c]; }
  bool inside(int c, int r) const { return c >= 0 && r >= 0 && c < width && r < height; }
  friend bool operator==(const BinaryGrid&, const BinaryGrid&) = default;
};

/// 3x3 square structuring element. Cells outside the grid act as 0 for
/// dilation and as 1 for erosion, which keeps the pair adjoint.
BinaryGrid dilate3(const BinaryGrid& g);
BinaryGrid erode3(const BinaryGrid& g);
inline BinaryGrid close3(const BinaryGrid& g) { return erode3(dilate3(g)); }
inline BinaryGrid open3(const BinaryGrid& g) { return dilate3(erode3(g)); }

}  // namespace ctf3d
