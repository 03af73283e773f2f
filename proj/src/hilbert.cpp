#include "condflow/hilbert.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace condflow {
namespace {

constexpr int kDims = 3;

void check_order(int order) {
  if (order < 1 || order > kMaxHilbertOrder)
    throw std::invalid_argument("hilbert order must be in [1," +
                                std::to_string(kMaxHilbertOrder) + "], got " +
                                std::to_string(order));
}

// Skilling 2004: coordinates -> transposed Hilbert index, in place.
void axes_to_transpose(std::uint32_t* x, int bits) {
  const std::uint32_t m = 1u << (bits - 1);
  std::uint32_t p, q, t;
  // inverse undo
  for (q = m; q > 1; q >>= 1) {
    p = q - 1;
    for (int i = 0; i < kDims; ++i) {
      if (x[i] & q) {
        x[0] ^= p;
      } else {
        t = (x[0] ^ x[i]) & p;
        x[0] ^= t;
        x[i] ^= t;
      }
    }
  }
  // Gray encode
  for (int i = 1; i < kDims; ++i) x[i] ^= x[i - 1];
  t = 0;
  for (q = m; q > 1; q >>= 1)
    if (x[kDims - 1] & q) t ^= q - 1;
  for (int i = 0; i < kDims; ++i) x[i] ^= t;
}

// transposed Hilbert index -> coordinates, in place
void transpose_to_axes(std::uint32_t* x, int bits) {
  const std::uint32_t m = 2u << (bits - 1);
  std::uint32_t p, q, t;
  // Gray decode by H ^ (H/2)
  t = x[kDims - 1] >> 1;
  for (int i = kDims - 1; i > 0; --i) x[i] ^= x[i - 1];
  x[0] ^= t;
  // undo excess work
  for (q = 2; q != m; q <<= 1) {
    p = q - 1;
    for (int i = kDims - 1; i >= 0; --i) {
      if (x[i] & q) {
        x[0] ^= p;
      } else {
        t = (x[0] ^ x[i]) & p;
        x[0] ^= t;
        x[i] ^= t;
      }
    }
  }
}

}  // namespace

std::uint64_t hilbert_xyz2d(int order, std::uint32_t x, std::uint32_t y, std::uint32_t z) {
  check_order(order);
  const std::uint32_t lim = order < 32 ? (1u << order) : 0u;
  if (lim && (x >= lim || y >= lim || z >= lim))
    throw std::invalid_argument("hilbert_xyz2d: coordinate out of range for order " +
                                std::to_string(order));
  std::uint32_t t[3] = {x, y, z};
  axes_to_transpose(t, order);
  // interleave MSB-first: axis 0 contributes the most significant bit of
  // each 3-bit group
  std::uint64_t d = 0;
  for (int q = order - 1; q >= 0; --q)
    for (int i = 0; i < kDims; ++i) d = (d << 1) | ((t[i] >> q) & 1u);
  return d;
}

std::array<std::uint32_t, 3> hilbert_d2xyz(int order, std::uint64_t d) {
  check_order(order);
  if (order < 21 && d >= (1ull << (3 * order)))
    throw std::invalid_argument("hilbert_d2xyz: index out of range for order " +
                                std::to_string(order));
  std::uint32_t t[3] = {0, 0, 0};
  for (int q = order - 1; q >= 0; --q)
    for (int i = 0; i < kDims; ++i) {
      const int bit = q * kDims + (kDims - 1 - i);
      t[i] |= static_cast<std::uint32_t>((d >> bit) & 1u) << q;
    }
  transpose_to_axes(t, order);
  return {t[0], t[1], t[2]};
}

std::vector<std::size_t> hilbert_sort_order(const std::vector<Point3>& pts, int order) {
  check_order(order);
  const std::size_t n = pts.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (n < 2) return idx;

  Point3 lo = pts[0], hi = pts[0];
  for (const auto& p : pts)
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  const double cells = std::pow(2.0, order);
  std::vector<std::uint64_t> key(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t c[3];
    for (int a = 0; a < 3; ++a) {
      const double ext = hi[a] - lo[a];
      double u = ext > 0.0 ? (pts[i][a] - lo[a]) / ext : 0.0;
      double q = std::floor(u * cells);
      if (q >= cells) q = cells - 1.0;
      if (q < 0.0) q = 0.0;
      c[a] = static_cast<std::uint32_t>(q);
    }
    key[i] = hilbert_xyz2d(order, c[0], c[1], c[2]);
  }
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  return idx;
}

std::vector<Point3> hilbert_sorted(const std::vector<Point3>& pts, int order) {
  auto idx = hilbert_sort_order(pts, order);
  std::vector<Point3> out(pts.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = pts[idx[i]];
  return out;
}

}  // namespace condflow
