#pragma once
// Invertible flow building blocks.  Every forward/inverse returns the
// transformed tensor together with that direction's own log|det J| (so
// forward and inverse logdets are negatives of each other).

#include <cstdint>
#include <utility>

#include "condflow/ops.hpp"
#include "condflow/optim.hpp"
#include "condflow/rng.hpp"
#include "condflow/tensor.hpp"

namespace condflow {

// Per-channel affine y = scale * x + bias.  First apply() runs data-dependent
// init: scale/bias are set so that batch has zero mean, unit variance per
// channel (std floored at 1e-6 for degenerate channels).
struct ActNorm {
  Tensor scale, bias;  // [C]
  bool initialized = false;

  explicit ActNorm(std::int64_t channels);

  Tensor apply(const Tensor& x);          // triggers init on first use
  Tensor invert(const Tensor& y) const;   // (y - bias) / scale
  // log|det| of apply() over an HxW spatial field: H*W * sum log|scale|
  Tensor fwd_logdet(std::int64_t H, std::int64_t W) const;
  void init_from_data(const Tensor& x);
  void register_params(ParamSet& ps, const std::string& prefix);

  std::int64_t channels() const { return scale.dim(0); }
};

// Invertible 1x1 convolution: per-pixel y = W x, plain square matrix.
struct InvConv1x1 {
  Tensor weight;  // [C,C], random orthogonal at init

  InvConv1x1(std::int64_t channels, Rng& rng);

  std::pair<Tensor, Tensor> forward(const Tensor& x) const;  // (y, logdet)
  std::pair<Tensor, Tensor> inverse(const Tensor& y) const;
  void register_params(ParamSet& ps, const std::string& prefix);
};

// Diagonal Gaussian with learnable mean / log-variance over a fixed shape.
struct GaussianPrior {
  Tensor mean, log_var;

  explicit GaussianPrior(const Shape& s);

  Tensor log_prob(const Tensor& z) const;  // scalar [1], nats
  // temperature scales the *variance*: std = sqrt(T * exp(log_var)).
  // T = 0 returns the mean (most likely sample) and draws nothing.
  Tensor sample(double temperature, Rng& rng) const;
  void register_params(ParamSet& ps, const std::string& prefix);
};

}  // namespace condflow
