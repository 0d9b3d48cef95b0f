#include <algorithm>

#include "ctf3d/binary_grid.hpp"

namespace ctf3d {
namespace {

// Separable 3x3 min/max: a horizontal pass then a vertical pass. `outside`
// is the value assumed beyond the grid border.
template <class Op>
BinaryGrid separable3(const BinaryGrid& g, std::uint8_t outside, Op op) {
  const int w = g.width, h = g.height;
  BinaryGrid tmp(w, h), out(w, h);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::uint8_t left = c > 0 ? g.at(c - 1, r) : outside;
      const std::uint8_t right = c + 1 < w ? g.at(c + 1, r) : outside;
      tmp.at(c, r) = op(op(left, g.at(c, r)), right);
    }
  }
#pragma omp parallel for schedule(static)
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::uint8_t up = r > 0 ? tmp.at(c, r - 1) : outside;
      const std::uint8_t down = r + 1 < h ? tmp.at(c, r + 1) : outside;
      out.at(c, r) = op(op(up, tmp.at(c, r)), down);
    }
  }
  return out;
}

}  // namespace

BinaryGrid dilate3(const BinaryGrid& g) {
  return separable3(g, 0, [](std::uint8_t a, std::uint8_t b) { return std::max(a, b); });
}

BinaryGrid erode3(const BinaryGrid& g) {
  return separable3(g, 1, [](std::uint8_t a, std::uint8_t b) { return std::min(a, b); });
}

}  // namespace ctf3d
