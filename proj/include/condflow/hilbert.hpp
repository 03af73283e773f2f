#pragma once
// 3D Hilbert curve via Skilling's transpose algorithm (Gray-code ranks +
// bit-rotation undo), plus curve-order sorting of point sets.

#include <array>
#include <cstdint>
#include <vector>

namespace condflow {

inline constexpr int kMaxHilbertOrder = 21;  // 3*21 = 63 index bits

// order in [1, 21]; coords in [0, 2^order)
std::uint64_t hilbert_xyz2d(int order, std::uint32_t x, std::uint32_t y, std::uint32_t z);
std::array<std::uint32_t, 3> hilbert_d2xyz(int order, std::uint64_t d);

using Point3 = std::array<double, 3>;

// Quantizes points to the curve grid over their bounding box and returns the
// point order along the curve.  Stable: equal keys keep input order.
std::vector<std::size_t> hilbert_sort_order(const std::vector<Point3>& pts, int order);
std::vector<Point3> hilbert_sorted(const std::vector<Point3>& pts, int order);

}  // namespace condflow
