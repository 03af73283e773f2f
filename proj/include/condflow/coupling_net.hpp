#pragma once
// Coupling transform and the small conv net that parameterizes it.
//
// Coupling splits channels at c = C/2, passes the first half through, and
// transforms the second half:
//   affine:   y2 = x2 * exp(s) + t        logdet = sum(s)
//   additive: y2 = x2 + t                 logdet = 0
// with (s, t) produced from the untouched half plus optional conditioning.
// The inverse recomputes (s, t) from the identical inputs and applies
// (y2 - t) * exp(-s).  s is soft-clamped to |s| <= 5 via 5*tanh(raw/5).
//
// Conditioning comes in two forms, both derived only from information the
// inverse also has:
//   * a cross-branch activation (its first cond_ch channels are taken and
//     center pad/cropped to this tensor's spatial dims), injected additively
//     into the net's hidden path through a 1x1 adapter conv + actnorm;
//   * a global feature: 1x1 conv over the untouched half, spatial max-pool
//     to a vector, broadcast back and concatenated to the adapter input.
//     When the global feature is active the adapter output doubles and is
//     applied affinely: first half scales the hidden path, second half
//     shifts it.

#include <cstdint>
#include <utility>

#include "condflow/layers.hpp"

namespace condflow {

enum class CouplingMode { affine, additive };
enum class InjectionMode { none, add, affine };

struct CouplingNetConfig {
  std::int64_t in_ch = 0;    // channels of the untouched half
  std::int64_t out_ch = 0;   // 2*(C-c) affine, (C-c) additive
  std::int64_t cond_ch = 0;  // adapter input channels; 0 = no adapter
  std::int64_t hidden = 64;
  InjectionMode injection = InjectionMode::none;
};

// conv3x3 -> actnorm -> relu -> conv1x1 -> actnorm -> relu -> [inject cond]
// -> conv3x3 (zero-init, so the whole net starts as the zero map)
struct CouplingNet {
  CouplingNetConfig cfg;
  Tensor w1, b1, w2, b2, w3, b3;
  ActNorm n1, n2;
  Tensor wa, ba;  // adapter, defined when cond_ch > 0
  ActNorm na;     // unused (1 channel placeholder) when no adapter

  CouplingNet(const CouplingNetConfig& cfg, Rng& rng);

  // cond, if present, must be [H,W,cond_ch] matching x spatially
  Tensor forward_raw(const Tensor& x, const Tensor* cond);
  void register_params(ParamSet& ps, const std::string& prefix);
};

struct CouplingConfig {
  std::int64_t channels = 0;  // C, even
  CouplingMode mode = CouplingMode::affine;
  std::int64_t cond_ch = 0;    // channels consumed from the condition tensor
  bool global_feature = false;
  std::int64_t hidden = 64;
};

struct Coupling {
  CouplingConfig cfg;
  CouplingNet net;
  Tensor gf_w, gf_b;  // global-feature 1x1 head (in_ch -> in_ch)

  Coupling(const CouplingConfig& cfg, Rng& rng);

  // cond is the raw cross-branch activation (any channel count >= cond_ch,
  // any spatial dims); nullptr when cond_ch == 0
  std::pair<Tensor, Tensor> forward(const Tensor& x, const Tensor* cond);
  std::pair<Tensor, Tensor> inverse(const Tensor& y, const Tensor* cond);
  void register_params(ParamSet& ps, const std::string& prefix);

  std::int64_t split() const { return cfg.channels / 2; }

 private:
  struct Params {
    Tensor s;  // defined only in affine mode (already clamped)
    Tensor t;
  };
  Params net_params(const Tensor& x1, const Tensor* cond);
};

}  // namespace condflow
