#include "condflow/coupling_net.hpp"

#include <stdexcept>

namespace condflow {

namespace {
constexpr double kInitStd = 0.05;
constexpr double kClamp = 5.0;
}  // namespace

CouplingNet::CouplingNet(const CouplingNetConfig& c, Rng& rng)
    : cfg(c),
      w1(randn({3, 3, c.in_ch, c.hidden}, rng, kInitStd)),
      b1(Tensor::zeros({c.hidden})),
      w2(randn({1, 1, c.hidden, c.hidden}, rng, kInitStd)),
      b2(Tensor::zeros({c.hidden})),
      w3(Tensor::zeros({3, 3, c.hidden, c.out_ch})),
      b3(Tensor::zeros({c.out_ch})),
      n1(c.hidden),
      n2(c.hidden),
      na(1) {
  if (c.in_ch <= 0 || c.out_ch <= 0 || c.hidden <= 0)
    throw std::invalid_argument("coupling net: channel counts must be positive");
  if ((c.cond_ch > 0) != (c.injection != InjectionMode::none))
    throw std::invalid_argument("coupling net: cond_ch and injection mode disagree");
  if (c.cond_ch > 0) {
    const std::int64_t aw = c.injection == InjectionMode::affine ? 2 * c.hidden : c.hidden;
    wa = randn({1, 1, c.cond_ch, aw}, rng, kInitStd);
    ba = Tensor::zeros({aw});
    na = ActNorm(aw);
  }
}

Tensor CouplingNet::forward_raw(const Tensor& x, const Tensor* cond) {
  if (x.rank() != 3 || x.dim(2) != cfg.in_ch)
    throw std::invalid_argument("coupling net: input " + shape_str(x.shape()) + " vs in_ch " +
                                std::to_string(cfg.in_ch));
  if ((cond != nullptr) != (cfg.cond_ch > 0))
    throw std::invalid_argument("coupling net: conditioning presence mismatch");
  Tensor h = relu(n1.apply(conv2d(x, w1, b1)));
  h = relu(n2.apply(conv2d(h, w2, b2)));
  if (cond) {
    if (cond->rank() != 3 || cond->dim(0) != x.dim(0) || cond->dim(1) != x.dim(1) ||
        cond->dim(2) != cfg.cond_ch)
      throw std::invalid_argument("coupling net: condition " + shape_str(cond->shape()) +
                                  " does not match input " + shape_str(x.shape()) + " / cond_ch " +
                                  std::to_string(cfg.cond_ch));
    Tensor a = na.apply(conv2d(*cond, wa, ba));
    if (cfg.injection == InjectionMode::affine) {
      Tensor gamma = slice_ch(a, 0, cfg.hidden);
      Tensor beta = slice_ch(a, cfg.hidden, 2 * cfg.hidden);
      h = add(mul(h, gamma), beta);
    } else {
      h = add(h, a);
    }
  }
  return conv2d(h, w3, b3);
}

void CouplingNet::register_params(ParamSet& ps, const std::string& prefix) {
  ps.add(prefix + ".w1", w1);
  ps.add(prefix + ".b1", b1);
  ps.add(prefix + ".w2", w2);
  ps.add(prefix + ".b2", b2);
  ps.add(prefix + ".w3", w3);
  ps.add(prefix + ".b3", b3);
  n1.register_params(ps, prefix + ".n1");
  n2.register_params(ps, prefix + ".n2");
  if (cfg.cond_ch > 0) {
    ps.add(prefix + ".wa", wa);
    ps.add(prefix + ".ba", ba);
    na.register_params(ps, prefix + ".na");
  }
}

// ------------------------------------------------------------------ coupling

namespace {

CouplingNetConfig net_config(const CouplingConfig& c) {
  if (c.channels < 2 || c.channels % 2)
    throw std::invalid_argument("coupling: channel count must be even and >= 2, got " +
                                std::to_string(c.channels));
  const std::int64_t half = c.channels / 2;
  CouplingNetConfig nc;
  nc.in_ch = half;
  nc.out_ch = c.mode == CouplingMode::affine ? 2 * (c.channels - half) : c.channels - half;
  nc.hidden = c.hidden;
  const std::int64_t gf_ch = c.global_feature ? half : 0;
  nc.cond_ch = c.cond_ch + gf_ch;
  nc.injection = nc.cond_ch == 0
                     ? InjectionMode::none
                     : (c.global_feature ? InjectionMode::affine : InjectionMode::add);
  return nc;
}

}  // namespace

Coupling::Coupling(const CouplingConfig& c, Rng& rng) : cfg(c), net(net_config(c), rng) {
  if (cfg.global_feature) {
    const std::int64_t half = split();
    gf_w = randn({1, 1, half, half}, rng, kInitStd);
    gf_b = Tensor::zeros({half});
  }
}

Coupling::Params Coupling::net_params(const Tensor& x1, const Tensor* cond) {
  const std::int64_t H = x1.dim(0), W = x1.dim(1);
  Tensor combined;
  if (cfg.cond_ch > 0) {
    if (!cond) throw std::invalid_argument("coupling: missing condition tensor");
    combined = pad_crop_hw(slice_ch(*cond, 0, cfg.cond_ch), H, W);
  }
  if (cfg.global_feature) {
    // depends only on the untouched half, so the inverse can rebuild it
    Tensor g = reduce_max(conv2d(x1, gf_w, gf_b), {0, 1});
    Tensor gb = broadcast_hw(g, H, W);
    combined = combined.defined() ? concat_ch(combined, gb) : gb;
  }
  Tensor o = net.forward_raw(x1, combined.defined() ? &combined : nullptr);
  Params p;
  const std::int64_t half_out = cfg.channels - split();
  if (cfg.mode == CouplingMode::affine) {
    Tensor raw = slice_ch(o, 0, half_out);
    p.s = scale(tanh_(scale(raw, 1.0 / kClamp)), kClamp);
    p.t = slice_ch(o, half_out, 2 * half_out);
  } else {
    p.t = o;
  }
  return p;
}

std::pair<Tensor, Tensor> Coupling::forward(const Tensor& x, const Tensor* cond) {
  if (x.rank() != 3 || x.dim(2) != cfg.channels)
    throw std::invalid_argument("coupling forward: input " + shape_str(x.shape()) +
                                " vs channels " + std::to_string(cfg.channels));
  const std::int64_t c = split();
  Tensor x1 = slice_ch(x, 0, c);
  Tensor x2 = slice_ch(x, c, cfg.channels);
  Params p = net_params(x1, cond);
  Tensor y2, ld;
  if (cfg.mode == CouplingMode::affine) {
    y2 = add(mul(x2, exp_(p.s)), p.t);
    ld = sum_all(p.s);
  } else {
    y2 = add(x2, p.t);
    ld = Tensor::zeros({1});
  }
  return {concat_ch(x1, y2), ld};
}

std::pair<Tensor, Tensor> Coupling::inverse(const Tensor& y, const Tensor* cond) {
  if (y.rank() != 3 || y.dim(2) != cfg.channels)
    throw std::invalid_argument("coupling inverse: input " + shape_str(y.shape()) +
                                " vs channels " + std::to_string(cfg.channels));
  const std::int64_t c = split();
  Tensor y1 = slice_ch(y, 0, c);
  Tensor y2 = slice_ch(y, c, cfg.channels);
  Params p = net_params(y1, cond);  // y1 == x1
  Tensor x2, ld;
  if (cfg.mode == CouplingMode::affine) {
    x2 = mul(sub(y2, p.t), exp_(neg(p.s)));
    ld = neg(sum_all(p.s));
  } else {
    x2 = sub(y2, p.t);
    ld = Tensor::zeros({1});
  }
  return {concat_ch(y1, x2), ld};
}

void Coupling::register_params(ParamSet& ps, const std::string& prefix) {
  net.register_params(ps, prefix + ".net");
  if (cfg.global_feature) {
    ps.add(prefix + ".gf_w", gf_w);
    ps.add(prefix + ".gf_b", gf_b);
  }
}

}  // namespace condflow
