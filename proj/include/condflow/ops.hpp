#pragma once
// Differentiable ops over Tensor.  Values are computed eagerly through the
// kernel layer; backward closures are attached only when grad recording is
// enabled and an input requires gradients.
//
// Elementwise binary ops broadcast in two cases besides same-shape:
//   * b has shape [C] against a of shape [..., C]   (per-channel)
//   * b has a single element                        (scalar)
// Gradients for the broadcast side are reduced accordingly.

#include "condflow/rng.hpp"
#include "condflow/tensor.hpp"

namespace condflow {

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double alpha);
Tensor add_scalar(const Tensor& a, double c);
Tensor exp_(const Tensor& a);
Tensor log_(const Tensor& a);   // rejects non-positive inputs
Tensor tanh_(const Tensor& a);
Tensor abs_(const Tensor& a);   // subgradient 0 at 0
Tensor relu(const Tensor& a);

// ---- reductions ----
// Reduced axes are removed from the shape; reducing every axis yields [1].
// Axes must be non-empty, in-range, and unique.
Tensor reduce_sum(const Tensor& a, const std::vector<int>& axes);
// max gradient flows to the first (lowest flat index) maximal element of
// each reduction group; ties broken deterministically that way.
Tensor reduce_max(const Tensor& a, const std::vector<int>& axes);
Tensor sum_all(const Tensor& a);  // -> [1]
Tensor mean_all(const Tensor& a);

// ---- shape ----
Tensor reshape(const Tensor& a, const Shape& s);
Tensor slice_ch(const Tensor& a, std::int64_t c0, std::int64_t c1);  // [H,W,C] -> [H,W,c1-c0]
Tensor concat_ch(const Tensor& a, const Tensor& b);                  // along channels
// [H,W,C] -> [H/2,W/2,4C]; 2x2 block [[1,2],[3,4]] of channel c lands in
// output channels c*4+0..3 as [1,2,3,4].  unsqueeze2x inverts it.
Tensor squeeze2x(const Tensor& a);
Tensor unsqueeze2x(const Tensor& a);
Tensor broadcast_hw(const Tensor& v, std::int64_t H, std::int64_t W);  // [C] -> [H,W,C]
// center pad (zeros) / crop to target spatial dims
Tensor pad_crop_hw(const Tensor& a, std::int64_t H, std::int64_t W);
Tensor transpose2d(const Tensor& a);  // [R,C] -> [C,R]

// ---- conv ----
// x: [H,W,Cin], k: [kh,kw,Cin,Cout] with kh,kw in {1,3}, bias: [Cout];
// stride 1, zero 'same' padding -> [H,W,Cout]
Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& bias);

// ---- linear algebra (square matrices, shape [C,C]) ----
Tensor matinv(const Tensor& w);      // rejects |det| < 1e-12
Tensor logabsdet(const Tensor& w);   // -> [1]; same singularity guard

// ---- constructors with randomness (leaves, no grad) ----
Tensor randn(const Shape& s, Rng& rng, double stddev = 1.0, double mean = 0.0);
Tensor rand_uniform(const Shape& s, Rng& rng, double lo, double hi);

}  // namespace condflow
