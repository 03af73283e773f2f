#include <cstdlib>
#include <stdexcept>
#include <string>

#include "condflow/kernels.hpp"

namespace condflow::kernels {
namespace {

const Ops* g_active = nullptr;
Backend g_backend = Backend::scalar;

void init_once() {
  if (g_active) return;
  Backend want = avx2_supported() ? Backend::avx2 : Backend::scalar;
  if (const char* env = std::getenv("CONDFLOW_KERNELS")) {
    std::string v(env);
    if (v == "scalar")
      want = Backend::scalar;
    else if (v == "avx2")
      want = Backend::avx2;
    else
      throw std::runtime_error("CONDFLOW_KERNELS must be 'scalar' or 'avx2', got '" + v + "'");
  }
  set_backend(want);
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") != 0;
#else
  return false;
#endif
}

void set_backend(Backend b) {
  if (b == Backend::avx2 && !avx2_supported())
    throw std::runtime_error("avx2 kernel backend requested but CPU lacks AVX2");
  g_backend = b;
  g_active = (b == Backend::avx2) ? &avx2_ops : &scalar_ops;
}

const Ops& ops() {
  init_once();
  return *g_active;
}

Backend active_backend() {
  init_once();
  return g_backend;
}

std::string backend_name(Backend b) {
  return b == Backend::avx2 ? "avx2" : "scalar";
}

}  // namespace condflow::kernels
