#pragma once
// Point-cloud support: text i/o, unit-cube normalization, resampling onto a
// curve-ordered grid, exact nearest neighbors, and a differentiable
// symmetric Chamfer distance.

#include <string>
#include <vector>

#include "condflow/hilbert.hpp"
#include "condflow/rng.hpp"
#include "condflow/tensor.hpp"

namespace condflow {

// text format: one "x y z" triple per line; blank lines and '#' comments ok
std::vector<Point3> read_pointcloud(const std::string& path);
void write_pointcloud(const std::string& path, const std::vector<Point3>& pts);

// uniform scale + shift into [0,1]^3 (aspect preserved; degenerate extent -> 1)
std::vector<Point3> normalize_unit_cube(const std::vector<Point3>& pts);

// Subsample without replacement (or duplicate uniformly when short), then
// Hilbert-sort, then fill an [H,W,3] grid row-major in curve order.
Tensor resample_reshape(const std::vector<Point3>& pts, std::int64_t H, std::int64_t W,
                        int hilbert_order, Rng& rng);

std::vector<Point3> tensor_to_points(const Tensor& t);  // [H,W,3] or [N,3]
Tensor points_to_tensor(const std::vector<Point3>& pts);  // [N,3]

// Exact nearest neighbor via a median-split k-d tree; ties resolved to the
// lowest point index.
class KdTree3 {
 public:
  explicit KdTree3(const std::vector<Point3>& pts);
  // returns {squared distance, index}; pts must be non-empty
  std::pair<double, std::size_t> nearest(const Point3& q) const;

 private:
  struct Node {
    Point3 p;
    std::size_t idx;
    int axis;
    std::int64_t left = -1, right = -1;
  };
  std::int64_t build(std::vector<std::size_t>& ids, std::int64_t lo, std::int64_t hi, int depth,
                     const std::vector<Point3>& pts);
  void search(std::int64_t node, const Point3& q, double& best_d2, std::size_t& best_idx) const;
  std::vector<Node> nodes_;
  std::int64_t root_ = -1;
};

// Symmetric Chamfer distance between point sets given as [H,W,3] or [N,3]
// tensors: 0.5 * (mean_a min_b ||a-b|| + mean_b min_a ||a-b||).
// Differentiable w.r.t. `a` only (nearest-neighbor assignments held fixed);
// a `b` requiring gradients is rejected.
Tensor chamfer(const Tensor& a, const Tensor& b);

}  // namespace condflow
