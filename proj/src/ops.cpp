#include "condflow/ops.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "condflow/kernels.hpp"

namespace condflow {
namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;
using kernels::ops;

NodePtr make_node(Shape s) {
  auto n = std::make_shared<Node>();
  n->value.resize(static_cast<std::size_t>(shape_numel(s)));
  n->shape = std::move(s);
  return n;
}

bool want_grad(std::initializer_list<const Tensor*> ins) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

void attach(const NodePtr& out, std::vector<NodePtr> parents, std::function<void(Node&)> fn) {
  out->requires_grad = true;
  out->parents = std::move(parents);
  out->backward_fn = std::move(fn);
}

enum class BMode { same, channel, scalar };

BMode bcast_mode(const char* opname, const Shape& a, const Shape& b) {
  if (a == b) return BMode::same;
  if (shape_numel(b) == 1) return BMode::scalar;
  if (b.size() == 1 && !a.empty() && a.back() == b[0]) return BMode::channel;
  throw std::invalid_argument(std::string(opname) + ": shapes " + shape_str(a) + " and " +
                              shape_str(b) + " are not broadcastable");
}

// reduce a full-size gradient g (shape of a) into the broadcast operand's grad
void reduce_to_b(BMode m, const double* g, double* gb, std::size_t n, std::size_t C) {
  switch (m) {
    case BMode::same:
      ops().axpy(1.0, g, gb, n);
      break;
    case BMode::channel:
      for (std::size_t i = 0; i < n; i += C) ops().axpy(1.0, g + i, gb, C);
      break;
    case BMode::scalar:
      gb[0] += ops().sum(g, n);
      break;
  }
}

}  // namespace

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  BMode m = bcast_mode("add", a.shape(), b.shape());
  auto out = make_node(a.shape());
  const std::size_t n = a.values().size(), C = b.values().size();
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* po = out->value.data();
  switch (m) {
    case BMode::same:
      ops().add(pa, pb, po, n);
      break;
    case BMode::channel:
      for (std::size_t i = 0; i < n; i += C) ops().add(pa + i, pb, po + i, C);
      break;
    case BMode::scalar: {
      const double s = pb[0];
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + s;
      break;
    }
  }
  if (want_grad({&a, &b})) {
    attach(out, {a.handle(), b.handle()}, [an = a.handle(), bn = b.handle(), m, C](Node& o) {
      if (an->requires_grad) {
        an->ensure_grad();
        ops().axpy(1.0, o.grad.data(), an->grad.data(), o.grad.size());
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        reduce_to_b(m, o.grad.data(), bn->grad.data(), o.grad.size(), C);
      }
    });
  }
  return Tensor::wrap(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  BMode m = bcast_mode("sub", a.shape(), b.shape());
  auto out = make_node(a.shape());
  const std::size_t n = a.values().size(), C = b.values().size();
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* po = out->value.data();
  switch (m) {
    case BMode::same:
      ops().sub(pa, pb, po, n);
      break;
    case BMode::channel:
      for (std::size_t i = 0; i < n; i += C) ops().sub(pa + i, pb, po + i, C);
      break;
    case BMode::scalar: {
      const double s = pb[0];
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - s;
      break;
    }
  }
  if (want_grad({&a, &b})) {
    attach(out, {a.handle(), b.handle()}, [an = a.handle(), bn = b.handle(), m, C](Node& o) {
      if (an->requires_grad) {
        an->ensure_grad();
        ops().axpy(1.0, o.grad.data(), an->grad.data(), o.grad.size());
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        std::vector<double> ng(o.grad.size());
        ops().scale(-1.0, o.grad.data(), ng.data(), o.grad.size());
        reduce_to_b(m, ng.data(), bn->grad.data(), ng.size(), C);
      }
    });
  }
  return Tensor::wrap(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  BMode m = bcast_mode("mul", a.shape(), b.shape());
  auto out = make_node(a.shape());
  const std::size_t n = a.values().size(), C = b.values().size();
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* po = out->value.data();
  switch (m) {
    case BMode::same:
      ops().mul(pa, pb, po, n);
      break;
    case BMode::channel:
      for (std::size_t i = 0; i < n; i += C) ops().mul(pa + i, pb, po + i, C);
      break;
    case BMode::scalar:
      ops().scale(pb[0], pa, po, n);
      break;
  }
  if (want_grad({&a, &b})) {
    attach(out, {a.handle(), b.handle()}, [an = a.handle(), bn = b.handle(), m, C](Node& o) {
      const std::size_t n2 = o.grad.size();
      const double* g = o.grad.data();
      if (an->requires_grad) {
        an->ensure_grad();
        double* ga = an->grad.data();
        const double* pb2 = bn->value.data();
        switch (m) {
          case BMode::same:
            ops().mul_acc(g, pb2, ga, n2);
            break;
          case BMode::channel:
            for (std::size_t i = 0; i < n2; i += C) ops().mul_acc(g + i, pb2, ga + i, C);
            break;
          case BMode::scalar:
            ops().axpy(pb2[0], g, ga, n2);
            break;
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        double* gb = bn->grad.data();
        const double* pa2 = an->value.data();
        switch (m) {
          case BMode::same:
            ops().mul_acc(g, pa2, gb, n2);
            break;
          case BMode::channel:
            for (std::size_t i = 0; i < n2; i += C) ops().mul_acc(g + i, pa2 + i, gb, C);
            break;
          case BMode::scalar:
            gb[0] += ops().dot(g, pa2, n2);
            break;
        }
      }
    });
  }
  return Tensor::wrap(out);
}

Tensor div(const Tensor& a, const Tensor& b) {
  BMode m = bcast_mode("div", a.shape(), b.shape());
  auto out = make_node(a.shape());
  const std::size_t n = a.values().size(), C = b.values().size();
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* po = out->value.data();
  switch (m) {
    case BMode::same:
      ops().div(pa, pb, po, n);
      break;
    case BMode::channel:
      for (std::size_t i = 0; i < n; i += C) ops().div(pa + i, pb, po + i, C);
      break;
    case BMode::scalar: {
      const double s = pb[0];
      for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] / s;
      break;
    }
  }
  if (want_grad({&a, &b})) {
    attach(out, {a.handle(), b.handle()}, [an = a.handle(), bn = b.handle(), m, C](Node& o) {
      const std::size_t n2 = o.grad.size();
      const double* g = o.grad.data();
      const double* pb2 = bn->value.data();
      if (an->requires_grad) {
        an->ensure_grad();
        double* ga = an->grad.data();
        for (std::size_t i = 0; i < n2; ++i) {
          double bv = (m == BMode::same) ? pb2[i] : (m == BMode::channel ? pb2[i % C] : pb2[0]);
          ga[i] += g[i] / bv;
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        double* gb = bn->grad.data();
        // d/db (a/b) = -a/b^2 = -out/b
        for (std::size_t i = 0; i < n2; ++i) {
          double bv = (m == BMode::same) ? pb2[i] : (m == BMode::channel ? pb2[i % C] : pb2[0]);
          double contrib = -g[i] * o.value[i] / bv;
          std::size_t j = (m == BMode::same) ? i : (m == BMode::channel ? i % C : 0);
          gb[j] += contrib;
        }
      }
    });
  }
  return Tensor::wrap(out);
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double alpha) {
  auto out = make_node(a.shape());
  ops().scale(alpha, a.values().data(), out->value.data(), a.values().size());
  if (want_grad({&a})) {
    attach(out, {a.handle()}, [an = a.handle(), alpha](Node& o) {
      an->ensure_grad();
      ops().axpy(alpha, o.grad.data(), an->grad.data(), o.grad.size());
    });
  }
  return Tensor::wrap(out);
}

Tensor add_scalar(const Tensor& a, double c) {
  auto out = make_node(a.shape());
  const double* pa = a.values().data();
  double* po = out->value.data();
  for (std::size_t i = 0; i < a.values().size(); ++i) po[i] = pa[i] + c;
  if (want_grad({&a})) {
    attach(out, {a.handle()}, [an = a.handle()](Node& o) {
      an->ensure_grad();
      ops().axpy(1.0, o.grad.data(), an->grad.data(), o.grad.size());
    });
  }
  return Tensor::wrap(out);
}

Tensor exp_(const Tensor& a) {
  auto out = make_node(a.shape());
  const double* pa = a.values().data();
  double* po = out->value.data();
  for (std::size_t i = 0; i < a.values().size(); ++i) po[i] = std::exp(pa[i]);
  if (want_grad({&a})) {
    attach(out, {a.handle()}, [an = a.handle()](Node& o) {
      an->ensure_grad();
      ops().mul_acc(o.grad.data(), o.value.data(), an->grad.data(), o.grad.size());
    });
  }
  return Tensor::wrap(out);
}

Tensor log_(const Tensor& a) {
  auto out = make_node(a.shape());
  const double* pa = a.values().data();
  double* po = out->value.data();
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    if (!(pa[i] > 0.0))
      throw std::invalid_argument("log: non-positive input " + std::to_string(pa[i]) +
                                  " at flat index " + std::to_string(i));
    po[i] = std::log(pa[i]);
  }
  if (want_grad({&a})) {
    attach(out, {a.handle()}, [an = a.handle()](Node& o) {
      an->ensure_grad();
      const double* pa2 = an->value.data();
      for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i] / pa2[i];
    });
  }
  return Tensor::wrap(out);
}

Tensor tanh_(const Tensor& a) {
  auto out = make_node(a.shape());
  const double* pa = a.values().data();
  double* po = out->value.data();
  for (std::size_t i = 0; i < a.values().size(); ++i) po[i] = std::tanh(pa[i]);
  if (want_grad({&a})) {
    attach(out, {a.handle()}, [an = a.handle()](Node& o) {
      an->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        an->grad[i] += o.grad[i] * (1.0 - o.value[i] * o.value[i]);
    });
  }
  return Tensor::wrap(out);
}

Tensor abs_(const Tensor& a) {
  auto out = make_node(a.shape());
  const double* pa = a.values().data();
  double* po = out->value.data();
  for (std::size_t i = 0; i < a.values().size(); ++i) po[i] = std::fabs(pa[i]);
  if (want_grad({&a})) {
    attach(out, {a.handle()}, [an = a.handle()](Node& o) {
      an->ensure_grad();
      const double* pa2 = an->value.data();
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        double s = pa2[i] > 0.0 ? 1.0 : (pa2[i] < 0.0 ? -1.0 : 0.0);
        an->grad[i] += o.grad[i] * s;
      }
    });
  }
  return Tensor::wrap(out);
}

Tensor relu(const Tensor& a) {
  auto out = make_node(a.shape());
  ops().relu(a.values().data(), out->value.data(), a.values().size());
  if (want_grad({&a})) {
    attach(out, {a.handle()}, [an = a.handle()](Node& o) {
      an->ensure_grad();
      ops().relu_grad_acc(an->value.data(), o.grad.data(), an->grad.data(), o.grad.size());
    });
  }
  return Tensor::wrap(out);
}

// ---------------------------------------------------------------- reductions

namespace {

// flat-index map input -> output cell, with reduced axes removed
std::shared_ptr<std::vector<std::int64_t>> reduction_map(const char* opname, const Shape& in,
                                                         const std::vector<int>& axes,
                                                         Shape& out_shape) {
  if (axes.empty()) throw std::invalid_argument(std::string(opname) + ": empty axis list");
  std::vector<bool> reduced(in.size(), false);
  for (int ax : axes) {
    if (ax < 0 || static_cast<std::size_t>(ax) >= in.size())
      throw std::invalid_argument(std::string(opname) + ": axis " + std::to_string(ax) +
                                  " out of range for shape " + shape_str(in));
    if (reduced[ax])
      throw std::invalid_argument(std::string(opname) + ": duplicate axis " + std::to_string(ax));
    reduced[ax] = true;
  }
  out_shape.clear();
  for (std::size_t d = 0; d < in.size(); ++d)
    if (!reduced[d]) out_shape.push_back(in[d]);
  if (out_shape.empty()) out_shape.push_back(1);

  const std::int64_t n = shape_numel(in);
  auto map = std::make_shared<std::vector<std::int64_t>>(n);
  std::vector<std::int64_t> coord(in.size(), 0);
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t oi = 0;
    for (std::size_t d = 0; d < in.size(); ++d)
      if (!reduced[d]) oi = oi * in[d] + coord[d];
    (*map)[i] = oi;
    for (std::size_t d = in.size(); d-- > 0;) {
      if (++coord[d] < in[d]) break;
      coord[d] = 0;
    }
  }
  return map;
}

}  // namespace

Tensor reduce_sum(const Tensor& a, const std::vector<int>& axes) {
  Shape os;
  auto map = reduction_map("reduce_sum", a.shape(), axes, os);
  auto out = make_node(os);
  const double* pa = a.values().data();
  for (std::size_t i = 0; i < a.values().size(); ++i) out->value[(*map)[i]] += pa[i];
  if (want_grad({&a})) {
    attach(out, {a.handle()}, [an = a.handle(), map](Node& o) {
      an->ensure_grad();
      for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += o.grad[(*map)[i]];
    });
  }
  return Tensor::wrap(out);
}

Tensor reduce_max(const Tensor& a, const std::vector<int>& axes) {
  Shape os;
  auto map = reduction_map("reduce_max", a.shape(), axes, os);
  auto out = make_node(os);
  auto arg = std::make_shared<std::vector<std::int64_t>>(out->value.size(), -1);
  const double* pa = a.values().data();
  // strict > keeps the lowest flat index on ties
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    std::int64_t oi = (*map)[i];
    if ((*arg)[oi] < 0 || pa[i] > out->value[oi]) {
      out->value[oi] = pa[i];
      (*arg)[oi] = static_cast<std::int64_t>(i);
    }
  }
  if (want_grad({&a})) {
    attach(out, {a.handle()}, [an = a.handle(), arg](Node& o) {
      an->ensure_grad();
      for (std::size_t j = 0; j < o.grad.size(); ++j) an->grad[(*arg)[j]] += o.grad[j];
    });
  }
  return Tensor::wrap(out);
}

Tensor sum_all(const Tensor& a) {
  auto out = make_node({1});
  out->value[0] = ops().sum(a.values().data(), a.values().size());
  if (want_grad({&a})) {
    attach(out, {a.handle()}, [an = a.handle()](Node& o) {
      an->ensure_grad();
      const double g = o.grad[0];
      for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
    });
  }
  return Tensor::wrap(out);
}

Tensor mean_all(const Tensor& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.numel()));
}

// --------------------------------------------------------------------- shape

Tensor reshape(const Tensor& a, const Shape& s) {
  if (shape_numel(s) != a.numel())
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " +
                                shape_str(s));
  auto out = make_node(s);
  out->value = a.values();
  if (want_grad({&a})) {
    attach(out, {a.handle()}, [an = a.handle()](Node& o) {
      an->ensure_grad();
      ops().axpy(1.0, o.grad.data(), an->grad.data(), o.grad.size());
    });
  }
  return Tensor::wrap(out);
}

Tensor slice_ch(const Tensor& a, std::int64_t c0, std::int64_t c1) {
  if (a.rank() < 1) throw std::invalid_argument("slice_ch: rank-0 input");
  const std::int64_t C = a.shape().back();
  if (c0 < 0 || c1 > C || c0 >= c1)
    throw std::invalid_argument("slice_ch: range [" + std::to_string(c0) + "," +
                                std::to_string(c1) + ") invalid for " + shape_str(a.shape()));
  Shape os = a.shape();
  os.back() = c1 - c0;
  auto out = make_node(os);
  const std::int64_t rows = a.numel() / C, W = c1 - c0;
  const double* pa = a.values().data();
  double* po = out->value.data();
  for (std::int64_t r = 0; r < rows; ++r)
    std::memcpy(po + r * W, pa + r * C + c0, static_cast<std::size_t>(W) * sizeof(double));
  if (want_grad({&a})) {
    attach(out, {a.handle()}, [an = a.handle(), C, c0, W, rows](Node& o) {
      an->ensure_grad();
      for (std::int64_t r = 0; r < rows; ++r)
        ops().axpy(1.0, o.grad.data() + r * W, an->grad.data() + r * C + c0, W);
    });
  }
  return Tensor::wrap(out);
}

Tensor concat_ch(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() < 1)
    throw std::invalid_argument("concat_ch: ranks differ: " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  for (std::size_t d = 0; d + 1 < a.rank(); ++d)
    if (a.shape()[d] != b.shape()[d])
      throw std::invalid_argument("concat_ch: leading dims differ: " + shape_str(a.shape()) +
                                  " vs " + shape_str(b.shape()));
  const std::int64_t Ca = a.shape().back(), Cb = b.shape().back();
  Shape os = a.shape();
  os.back() = Ca + Cb;
  auto out = make_node(os);
  const std::int64_t rows = a.numel() / Ca;
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* po = out->value.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    std::memcpy(po + r * (Ca + Cb), pa + r * Ca, static_cast<std::size_t>(Ca) * sizeof(double));
    std::memcpy(po + r * (Ca + Cb) + Ca, pb + r * Cb,
                static_cast<std::size_t>(Cb) * sizeof(double));
  }
  if (want_grad({&a, &b})) {
    attach(out, {a.handle(), b.handle()},
           [an = a.handle(), bn = b.handle(), Ca, Cb, rows](Node& o) {
             if (an->requires_grad) {
               an->ensure_grad();
               for (std::int64_t r = 0; r < rows; ++r)
                 ops().axpy(1.0, o.grad.data() + r * (Ca + Cb), an->grad.data() + r * Ca, Ca);
             }
             if (bn->requires_grad) {
               bn->ensure_grad();
               for (std::int64_t r = 0; r < rows; ++r)
                 ops().axpy(1.0, o.grad.data() + r * (Ca + Cb) + Ca, bn->grad.data() + r * Cb, Cb);
             }
           });
  }
  return Tensor::wrap(out);
}

namespace {

// permutation ops share this: out[perm[i]] = in[i]
Tensor apply_perm(const Tensor& a, Shape os, std::shared_ptr<std::vector<std::int64_t>> perm) {
  auto out = make_node(std::move(os));
  const double* pa = a.values().data();
  for (std::size_t i = 0; i < a.values().size(); ++i) out->value[(*perm)[i]] = pa[i];
  if (want_grad({&a})) {
    attach(out, {a.handle()}, [an = a.handle(), perm](Node& o) {
      an->ensure_grad();
      for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += o.grad[(*perm)[i]];
    });
  }
  return Tensor::wrap(out);
}

void check_hwc(const char* opname, const Tensor& a) {
  if (a.rank() != 3)
    throw std::invalid_argument(std::string(opname) + ": expected [H,W,C], got " +
                                shape_str(a.shape()));
}

}  // namespace

Tensor squeeze2x(const Tensor& a) {
  check_hwc("squeeze2x", a);
  const std::int64_t H = a.dim(0), W = a.dim(1), C = a.dim(2);
  if (H % 2 || W % 2)
    throw std::invalid_argument("squeeze2x: spatial dims must be even, got " +
                                shape_str(a.shape()));
  const std::int64_t Ho = H / 2, Wo = W / 2, Co = 4 * C;
  auto perm = std::make_shared<std::vector<std::int64_t>>(a.numel());
  for (std::int64_t i = 0; i < H; ++i)
    for (std::int64_t j = 0; j < W; ++j)
      for (std::int64_t c = 0; c < C; ++c) {
        std::int64_t pos = (i % 2) * 2 + (j % 2);  // TL,TR,BL,BR
        std::int64_t oi = ((i / 2) * Wo + j / 2) * Co + c * 4 + pos;
        (*perm)[(i * W + j) * C + c] = oi;
      }
  return apply_perm(a, {Ho, Wo, Co}, std::move(perm));
}

Tensor unsqueeze2x(const Tensor& a) {
  check_hwc("unsqueeze2x", a);
  const std::int64_t H = a.dim(0), W = a.dim(1), C = a.dim(2);
  if (C % 4)
    throw std::invalid_argument("unsqueeze2x: channels must be divisible by 4, got " +
                                shape_str(a.shape()));
  const std::int64_t Ho = H * 2, Wo = W * 2, Co = C / 4;
  auto perm = std::make_shared<std::vector<std::int64_t>>(a.numel());
  for (std::int64_t i = 0; i < H; ++i)
    for (std::int64_t j = 0; j < W; ++j)
      for (std::int64_t c = 0; c < C; ++c) {
        std::int64_t co = c / 4, pos = c % 4;
        std::int64_t io = i * 2 + pos / 2, jo = j * 2 + pos % 2;
        (*perm)[(i * W + j) * C + c] = (io * Wo + jo) * Co + co;
      }
  return apply_perm(a, {Ho, Wo, Co}, std::move(perm));
}

Tensor broadcast_hw(const Tensor& v, std::int64_t H, std::int64_t W) {
  if (v.rank() != 1)
    throw std::invalid_argument("broadcast_hw: expected [C], got " + shape_str(v.shape()));
  const std::int64_t C = v.dim(0);
  auto out = make_node({H, W, C});
  const double* pv = v.values().data();
  for (std::int64_t r = 0; r < H * W; ++r)
    std::memcpy(out->value.data() + r * C, pv, static_cast<std::size_t>(C) * sizeof(double));
  if (want_grad({&v})) {
    attach(out, {v.handle()}, [vn = v.handle(), C, HW = H * W](Node& o) {
      vn->ensure_grad();
      for (std::int64_t r = 0; r < HW; ++r)
        ops().axpy(1.0, o.grad.data() + r * C, vn->grad.data(), C);
    });
  }
  return Tensor::wrap(out);
}

Tensor pad_crop_hw(const Tensor& a, std::int64_t H2, std::int64_t W2) {
  check_hwc("pad_crop_hw", a);
  if (H2 <= 0 || W2 <= 0) throw std::invalid_argument("pad_crop_hw: target dims must be positive");
  const std::int64_t H = a.dim(0), W = a.dim(1), C = a.dim(2);
  if (H2 == H && W2 == W) return reshape(a, a.shape());  // identity, keeps tape simple
  const std::int64_t oi = (H2 - H) / 2, oj = (W2 - W) / 2;
  auto out = make_node({H2, W2, C});
  const double* pa = a.values().data();
  for (std::int64_t i2 = 0; i2 < H2; ++i2) {
    const std::int64_t i = i2 - oi;
    if (i < 0 || i >= H) continue;
    for (std::int64_t j2 = 0; j2 < W2; ++j2) {
      const std::int64_t j = j2 - oj;
      if (j < 0 || j >= W) continue;
      std::memcpy(out->value.data() + (i2 * W2 + j2) * C, pa + (i * W + j) * C,
                  static_cast<std::size_t>(C) * sizeof(double));
    }
  }
  if (want_grad({&a})) {
    attach(out, {a.handle()}, [an = a.handle(), H, W, C, H2, W2, oi, oj](Node& o) {
      an->ensure_grad();
      for (std::int64_t i2 = 0; i2 < H2; ++i2) {
        const std::int64_t i = i2 - oi;
        if (i < 0 || i >= H) continue;
        for (std::int64_t j2 = 0; j2 < W2; ++j2) {
          const std::int64_t j = j2 - oj;
          if (j < 0 || j >= W) continue;
          ops().axpy(1.0, o.grad.data() + (i2 * W2 + j2) * C, an->grad.data() + (i * W + j) * C,
                     C);
        }
      }
    });
  }
  return Tensor::wrap(out);
}

Tensor transpose2d(const Tensor& a) {
  if (a.rank() != 2)
    throw std::invalid_argument("transpose2d: expected [R,C], got " + shape_str(a.shape()));
  const std::int64_t R = a.dim(0), C = a.dim(1);
  auto perm = std::make_shared<std::vector<std::int64_t>>(a.numel());
  for (std::int64_t r = 0; r < R; ++r)
    for (std::int64_t c = 0; c < C; ++c) (*perm)[r * C + c] = c * R + r;
  return apply_perm(a, {C, R}, std::move(perm));
}

// ---------------------------------------------------------------------- conv

Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& bias) {
  if (x.rank() != 3 || k.rank() != 4 || bias.rank() != 1)
    throw std::invalid_argument("conv2d: ranks must be input[H,W,Cin] kernel[kh,kw,Cin,Cout] "
                                "bias[Cout], got " +
                                shape_str(x.shape()) + ", " + shape_str(k.shape()) + ", " +
                                shape_str(bias.shape()));
  const std::int64_t H = x.dim(0), W = x.dim(1), Cin = x.dim(2);
  const std::int64_t kh = k.dim(0), kw = k.dim(1);
  const std::int64_t Cout = k.dim(3);
  if ((kh != 1 && kh != 3) || (kw != 1 && kw != 3))
    throw std::invalid_argument("conv2d: kernel spatial dims must be 1 or 3, got " +
                                shape_str(k.shape()));
  if (k.dim(2) != Cin)
    throw std::invalid_argument("conv2d: input " + shape_str(x.shape()) + " vs kernel " +
                                shape_str(k.shape()) + ": channel mismatch");
  if (bias.dim(0) != Cout)
    throw std::invalid_argument("conv2d: kernel " + shape_str(k.shape()) + " vs bias " +
                                shape_str(bias.shape()) + ": output-channel mismatch");

  const std::int64_t ph = kh / 2, pw = kw / 2;
  auto out = make_node({H, W, Cout});
  const double* px = x.values().data();
  const double* pk = k.values().data();
  const double* pb = bias.values().data();
  double* po = out->value.data();
  for (std::int64_t i = 0; i < H; ++i)
    for (std::int64_t j = 0; j < W; ++j) {
      double* op = po + (i * W + j) * Cout;
      std::memcpy(op, pb, static_cast<std::size_t>(Cout) * sizeof(double));
      for (std::int64_t dy = 0; dy < kh; ++dy) {
        const std::int64_t sy = i + dy - ph;
        if (sy < 0 || sy >= H) continue;
        for (std::int64_t dx = 0; dx < kw; ++dx) {
          const std::int64_t sx = j + dx - pw;
          if (sx < 0 || sx >= W) continue;
          const double* ip = px + (sy * W + sx) * Cin;
          const double* kp = pk + (dy * kw + dx) * Cin * Cout;
          for (std::int64_t ci = 0; ci < Cin; ++ci)
            ops().axpy(ip[ci], kp + ci * Cout, op, Cout);
        }
      }
    }

  if (want_grad({&x, &k, &bias})) {
    attach(out, {x.handle(), k.handle(), bias.handle()},
           [xn = x.handle(), kn = k.handle(), bn = bias.handle(), H, W, Cin, Cout, kh, kw, ph,
            pw](Node& o) {
             const double* g = o.grad.data();
             const double* px2 = xn->value.data();
             const double* pk2 = kn->value.data();
             if (xn->requires_grad) {
               xn->ensure_grad();
               double* gx = xn->grad.data();
               for (std::int64_t i = 0; i < H; ++i)
                 for (std::int64_t j = 0; j < W; ++j) {
                   const double* gp = g + (i * W + j) * Cout;
                   for (std::int64_t dy = 0; dy < kh; ++dy) {
                     const std::int64_t sy = i + dy - ph;
                     if (sy < 0 || sy >= H) continue;
                     for (std::int64_t dx = 0; dx < kw; ++dx) {
                       const std::int64_t sx = j + dx - pw;
                       if (sx < 0 || sx >= W) continue;
                       double* gxp = gx + (sy * W + sx) * Cin;
                       const double* kp = pk2 + (dy * kw + dx) * Cin * Cout;
                       for (std::int64_t ci = 0; ci < Cin; ++ci)
                         gxp[ci] += ops().dot(gp, kp + ci * Cout, Cout);
                     }
                   }
                 }
             }
             if (kn->requires_grad) {
               kn->ensure_grad();
               double* gk = kn->grad.data();
               for (std::int64_t i = 0; i < H; ++i)
                 for (std::int64_t j = 0; j < W; ++j) {
                   const double* gp = g + (i * W + j) * Cout;
                   for (std::int64_t dy = 0; dy < kh; ++dy) {
                     const std::int64_t sy = i + dy - ph;
                     if (sy < 0 || sy >= H) continue;
                     for (std::int64_t dx = 0; dx < kw; ++dx) {
                       const std::int64_t sx = j + dx - pw;
                       if (sx < 0 || sx >= W) continue;
                       const double* ip = px2 + (sy * W + sx) * Cin;
                       double* gkp = gk + (dy * kw + dx) * Cin * Cout;
                       for (std::int64_t ci = 0; ci < Cin; ++ci)
                         ops().axpy(ip[ci], gp, gkp + ci * Cout, Cout);
                     }
                   }
                 }
             }
             if (bn->requires_grad) {
               bn->ensure_grad();
               for (std::int64_t r = 0; r < H * W; ++r)
                 ops().axpy(1.0, g + r * Cout, bn->grad.data(), Cout);
             }
           });
  }
  return Tensor::wrap(out);
}

// ------------------------------------------------------------ linear algebra

namespace {

// LU with partial pivoting; returns false on a pivot collapse.  detmag/out
// are optional.
bool lu_factor(std::vector<double>& a, std::int64_t n, std::vector<std::int64_t>& piv,
               double& detsign) {
  piv.resize(n);
  detsign = 1.0;
  for (std::int64_t i = 0; i < n; ++i) piv[i] = i;
  for (std::int64_t col = 0; col < n; ++col) {
    std::int64_t best = col;
    double bv = std::fabs(a[col * n + col]);
    for (std::int64_t r = col + 1; r < n; ++r) {
      double v = std::fabs(a[r * n + col]);
      if (v > bv) {
        bv = v;
        best = r;
      }
    }
    if (bv == 0.0) return false;
    if (best != col) {
      for (std::int64_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[best * n + c]);
      std::swap(piv[col], piv[best]);
      detsign = -detsign;
    }
    const double pivot = a[col * n + col];
    for (std::int64_t r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / pivot;
      a[r * n + col] = f;
      for (std::int64_t c = col + 1; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
    }
  }
  return true;
}

void check_square(const char* opname, const Tensor& w) {
  if (w.rank() != 2 || w.dim(0) != w.dim(1))
    throw std::invalid_argument(std::string(opname) + ": expected square matrix, got " +
                                shape_str(w.shape()));
}

void check_det(const char* opname, const std::vector<double>& lu, std::int64_t n, bool ok) {
  double absdet = ok ? 1.0 : 0.0;
  for (std::int64_t i = 0; ok && i < n; ++i) absdet *= std::fabs(lu[i * n + i]);
  if (!ok || absdet < 1e-12)
    throw std::runtime_error(std::string(opname) + ": matrix is numerically singular (|det| = " +
                             std::to_string(absdet) + " < 1e-12)");
}

// C += A^T * B^T convenience pieces for the matinv backward are built from
// this plain n^3 product: C = A * B.
std::vector<double> matmul_nn(const std::vector<double>& a, const std::vector<double>& b,
                              std::int64_t n) {
  std::vector<double> c(static_cast<std::size_t>(n) * n, 0.0);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t k2 = 0; k2 < n; ++k2) {
      const double av = a[i * n + k2];
      for (std::int64_t j = 0; j < n; ++j) c[i * n + j] += av * b[k2 * n + j];
    }
  return c;
}

std::vector<double> mat_transpose(const std::vector<double>& a, std::int64_t n) {
  std::vector<double> t(a.size());
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) t[j * n + i] = a[i * n + j];
  return t;
}

std::vector<double> lu_inverse(const Tensor& w, const char* opname) {
  const std::int64_t n = w.dim(0);
  std::vector<double> lu = w.values();
  std::vector<std::int64_t> piv;
  double ds;
  bool ok = lu_factor(lu, n, piv, ds);
  check_det(opname, lu, n, ok);
  std::vector<double> inv(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<double> col(n);
  for (std::int64_t e = 0; e < n; ++e) {
    for (std::int64_t i = 0; i < n; ++i) col[i] = piv[i] == e ? 1.0 : 0.0;
    for (std::int64_t i = 0; i < n; ++i)  // forward solve L y = P e
      for (std::int64_t j2 = 0; j2 < i; ++j2) col[i] -= lu[i * n + j2] * col[j2];
    for (std::int64_t i = n; i-- > 0;) {  // back solve U x = y
      for (std::int64_t j2 = i + 1; j2 < n; ++j2) col[i] -= lu[i * n + j2] * col[j2];
      col[i] /= lu[i * n + i];
    }
    for (std::int64_t i = 0; i < n; ++i) inv[i * n + e] = col[i];
  }
  return inv;
}

}  // namespace

Tensor matinv(const Tensor& w) {
  check_square("matinv", w);
  const std::int64_t n = w.dim(0);
  auto out = make_node({n, n});
  out->value = lu_inverse(w, "matinv");
  if (want_grad({&w})) {
    attach(out, {w.handle()}, [wn = w.handle(), n](Node& o) {
      wn->ensure_grad();
      // d(W^-1) -> gW = -W^-T * G * W^-T
      auto winv_t = mat_transpose(o.value, n);
      auto t = matmul_nn(winv_t, matmul_nn(o.grad, winv_t, n), n);
      for (std::size_t i = 0; i < t.size(); ++i) wn->grad[i] -= t[i];
    });
  }
  return Tensor::wrap(out);
}

Tensor logabsdet(const Tensor& w) {
  check_square("logabsdet", w);
  const std::int64_t n = w.dim(0);
  std::vector<double> lu = w.values();
  std::vector<std::int64_t> piv;
  double ds;
  bool ok = lu_factor(lu, n, piv, ds);
  check_det("logabsdet", lu, n, ok);
  auto out = make_node({1});
  double s = 0.0;
  for (std::int64_t i = 0; i < n; ++i) s += std::log(std::fabs(lu[i * n + i]));
  out->value[0] = s;
  if (want_grad({&w})) {
    attach(out, {w.handle()}, [wn = w.handle(), n](Node& o) {
      wn->ensure_grad();
      // d log|det W| / dW = W^-T
      Tensor wt = Tensor::wrap(wn).detach_copy();  // values only
      auto inv = lu_inverse(wt, "logabsdet");
      auto invt = mat_transpose(inv, n);
      ops().axpy(o.grad[0], invt.data(), wn->grad.data(), invt.size());
    });
  }
  return Tensor::wrap(out);
}

// ---------------------------------------------------------------------- rand

Tensor randn(const Shape& s, Rng& rng, double stddev, double mean) {
  auto out = make_node(s);
  for (auto& v : out->value) v = mean + stddev * rng.normal();
  return Tensor::wrap(out);
}

Tensor rand_uniform(const Shape& s, Rng& rng, double lo, double hi) {
  auto out = make_node(s);
  for (auto& v : out->value) v = lo + (hi - lo) * rng.uniform();
  return Tensor::wrap(out);
}

}  // namespace condflow
