#include "condflow/layers.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace condflow {

// ------------------------------------------------------------------- actnorm

ActNorm::ActNorm(std::int64_t channels)
    : scale(Tensor::full({channels}, 1.0)), bias(Tensor::zeros({channels})) {}

void ActNorm::init_from_data(const Tensor& x) {
  const std::int64_t C = channels();
  if (x.shape().back() != C)
    throw std::invalid_argument("actnorm init: input " + shape_str(x.shape()) + " vs " +
                                std::to_string(C) + " channels");
  const std::int64_t rows = x.numel() / C;
  auto& sv = scale.values_mut();
  auto& bv = bias.values_mut();
  const auto& xv = x.values();
  for (std::int64_t c = 0; c < C; ++c) {
    double mean = 0.0;
    for (std::int64_t r = 0; r < rows; ++r) mean += xv[r * C + c];
    mean /= static_cast<double>(rows);
    double var = 0.0;
    for (std::int64_t r = 0; r < rows; ++r) {
      const double d = xv[r * C + c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(rows);
    // std floored at 1e-6: degenerate channels get a huge but finite scale
    const double s = 1.0 / std::sqrt(std::max(var, 1e-12));
    sv[c] = s;
    bv[c] = -mean * s;
  }
  initialized = true;
}

Tensor ActNorm::apply(const Tensor& x) {
  if (!initialized) init_from_data(x);
  return add(mul(x, scale), bias);
}

Tensor ActNorm::invert(const Tensor& y) const {
  if (!initialized)
    throw std::runtime_error("actnorm invert: layer has not been initialized (no forward pass)");
  for (double s : scale.values())
    if (s == 0.0) throw std::runtime_error("actnorm invert: zero scale");
  return div(sub(y, bias), scale);
}

Tensor ActNorm::fwd_logdet(std::int64_t H, std::int64_t W) const {
  return condflow::scale(sum_all(log_(abs_(scale))), static_cast<double>(H * W));
}

void ActNorm::register_params(ParamSet& ps, const std::string& prefix) {
  ps.add(prefix + ".scale", scale);
  ps.add(prefix + ".bias", bias);
}

// --------------------------------------------------------------- invconv 1x1

namespace {

// rows of a random normal matrix, Gram-Schmidt orthonormalized
Tensor random_orthogonal(std::int64_t n, Rng& rng) {
  std::vector<double> m(static_cast<std::size_t>(n) * n);
  for (auto& v : m) v = rng.normal();
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < i; ++j) {
      double d = 0.0;
      for (std::int64_t k = 0; k < n; ++k) d += m[i * n + k] * m[j * n + k];
      for (std::int64_t k = 0; k < n; ++k) m[i * n + k] -= d * m[j * n + k];
    }
    double nrm = 0.0;
    for (std::int64_t k = 0; k < n; ++k) nrm += m[i * n + k] * m[i * n + k];
    nrm = std::sqrt(nrm);
    if (nrm < 1e-8) throw std::runtime_error("random_orthogonal: degenerate draw");
    for (std::int64_t k = 0; k < n; ++k) m[i * n + k] /= nrm;
  }
  return Tensor::from_vector({n, n}, std::move(m));
}

// per-pixel y = M x via a 1x1 conv; kernel[0,0,ci,co] must be M[co][ci]
Tensor apply_matrix(const Tensor& x, const Tensor& m) {
  const std::int64_t C = m.dim(0);
  Tensor k = reshape(transpose2d(m), {1, 1, C, C});
  return conv2d(x, k, Tensor::zeros({C}));
}

}  // namespace

InvConv1x1::InvConv1x1(std::int64_t channels, Rng& rng) : weight(random_orthogonal(channels, rng)) {}

std::pair<Tensor, Tensor> InvConv1x1::forward(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(2) != weight.dim(0))
    throw std::invalid_argument("invconv: input " + shape_str(x.shape()) + " vs weight " +
                                shape_str(weight.shape()));
  Tensor ld = scale(logabsdet(weight), static_cast<double>(x.dim(0) * x.dim(1)));
  return {apply_matrix(x, weight), ld};
}

std::pair<Tensor, Tensor> InvConv1x1::inverse(const Tensor& y) const {
  if (y.rank() != 3 || y.dim(2) != weight.dim(0))
    throw std::invalid_argument("invconv: input " + shape_str(y.shape()) + " vs weight " +
                                shape_str(weight.shape()));
  Tensor ld = scale(logabsdet(weight), -static_cast<double>(y.dim(0) * y.dim(1)));
  return {apply_matrix(y, matinv(weight)), ld};
}

void InvConv1x1::register_params(ParamSet& ps, const std::string& prefix) {
  ps.add(prefix + ".weight", weight);
}

// --------------------------------------------------------------------- prior

GaussianPrior::GaussianPrior(const Shape& s)
    : mean(Tensor::zeros(s)), log_var(Tensor::zeros(s)) {}

Tensor GaussianPrior::log_prob(const Tensor& z) const {
  if (z.shape() != mean.shape())
    throw std::invalid_argument("prior log_prob: z " + shape_str(z.shape()) + " vs prior " +
                                shape_str(mean.shape()));
  Tensor d = sub(z, mean);
  Tensor quad = mul(mul(d, d), exp_(neg(log_var)));
  constexpr double ln_2pi = 1.8378770664093454836;  // log(2*pi)
  return scale(sum_all(add(add_scalar(log_var, ln_2pi), quad)), -0.5);
}

Tensor GaussianPrior::sample(double temperature, Rng& rng) const {
  if (temperature < 0.0)
    throw std::invalid_argument("prior sample: negative temperature " +
                                std::to_string(temperature));
  Tensor out = mean.detach_copy();
  if (temperature == 0.0) return out;
  auto& ov = out.values_mut();
  const auto& lv = log_var.values();
  for (std::size_t i = 0; i < ov.size(); ++i)
    ov[i] += std::sqrt(temperature * std::exp(lv[i])) * rng.normal();
  return out;
}

void GaussianPrior::register_params(ParamSet& ps, const std::string& prefix) {
  ps.add(prefix + ".mean", mean);
  ps.add(prefix + ".log_var", log_var);
}

}  // namespace condflow
