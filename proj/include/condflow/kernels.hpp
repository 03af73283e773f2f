#pragma once
// Low-level float64 array kernels: scalar reference implementations plus
// AVX2 variants selected at runtime.  Both backends are required to produce
// bit-identical results for every kernel:
//
//  * elementwise kernels round each element independently, so lane width is
//    irrelevant;
//  * reductions (sum, dot) use a fixed association: four strided partial
//    accumulators over the 4-aligned prefix, combined as (s0+s1)+(s2+s3),
//    then the tail folded in left to right.  The scalar backend implements
//    the same association explicitly.
//
// No FMA is used anywhere (and the project builds with -ffp-contract=off),
// so a*b+c is always two roundings in both backends.

#include <cstddef>
#include <string>

namespace condflow::kernels {

enum class Backend { scalar, avx2 };

struct Ops {
  // c[i] = a[i] op b[i]
  void (*add)(const double* a, const double* b, double* c, std::size_t n);
  void (*sub)(const double* a, const double* b, double* c, std::size_t n);
  void (*mul)(const double* a, const double* b, double* c, std::size_t n);
  void (*div)(const double* a, const double* b, double* c, std::size_t n);
  // y[i] = alpha * x[i]
  void (*scale)(double alpha, const double* x, double* y, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // c[i] += a[i] * b[i]
  void (*mul_acc)(const double* a, const double* b, double* c, std::size_t n);
  // y[i] = max(x[i], 0)
  void (*relu)(const double* x, double* y, std::size_t n);
  // gx[i] += x[i] > 0 ? g[i] : 0
  void (*relu_grad_acc)(const double* x, const double* g, double* gx, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  // maximum element; n must be >= 1 and values finite
  double (*max)(const double* x, std::size_t n);
};

extern const Ops scalar_ops;
extern const Ops avx2_ops;

bool avx2_supported();

// Active table.  Chosen on first use: CONDFLOW_KERNELS=scalar|avx2 wins if
// set (avx2 on an unsupported CPU is an error), otherwise avx2 when the CPU
// has it, else scalar.
const Ops& ops();
Backend active_backend();
void set_backend(Backend b);  // throws std::runtime_error if unsupported
std::string backend_name(Backend b);

}  // namespace condflow::kernels
