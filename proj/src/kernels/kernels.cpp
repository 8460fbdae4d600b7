#include "stc/kernels.hpp"

#include <cstdlib>
#include <cstring>

#include "stc/common.hpp"
#include "stc/threadpool.hpp"

namespace stc::kernels {

namespace {

struct Vtable {
  void (*gemm)(int64_t, int64_t, int64_t, const double*, const double*, double*, bool);
  void (*gemm_nt)(int64_t, int64_t, int64_t, const double*, const double*, double*, bool);
  void (*add)(const double*, const double*, double*, int64_t);
  void (*scale)(const double*, double, double*, int64_t);
  void (*axpy)(double, const double*, double*, int64_t);
  void (*mul_accum)(const double*, const double*, double*, int64_t);
  void (*relu)(const double*, double*, int64_t);
  void (*relu_bwd)(const double*, const double*, double*, int64_t);
  void (*sigmoid)(const double*, double*, int64_t);
  void (*sigmoid_bwd)(const double*, const double*, double*, int64_t);
};

constexpr Vtable kScalar = {
    detail::gemm_scalar,   detail::gemm_nt_scalar, detail::add_scalar,
    detail::scale_scalar,  detail::axpy_scalar,    detail::mul_accum_scalar,
    detail::relu_scalar,   detail::relu_bwd_scalar,
    detail::sigmoid_scalar, detail::sigmoid_bwd_scalar,
};

#if defined(__x86_64__) || defined(_M_X64)
// sigmoid has no vector variant (exp stays scalar); the slots fall back.
constexpr Vtable kAvx2 = {
    detail::gemm_avx2,   detail::gemm_nt_avx2, detail::add_avx2,
    detail::scale_avx2,  detail::axpy_avx2,    detail::mul_accum_avx2,
    detail::relu_avx2,   detail::relu_bwd_avx2,
    detail::sigmoid_scalar, detail::sigmoid_bwd_scalar,
};
#endif

Isa g_isa = Isa::Scalar;
const Vtable* g_vt = &kScalar;

Isa pick_default() {
  if (const char* env = std::getenv("STCNET_SIMD")) {
    if (std::strcmp(env, "scalar") == 0) return Isa::Scalar;
    if (std::strcmp(env, "avx2") == 0) {
      if (!cpu_supports_avx2())
        throw RuntimeError("STCNET_SIMD=avx2 requested but CPU lacks AVX2+FMA");
      return Isa::Avx2;
    }
  }
  return cpu_supports_avx2() ? Isa::Avx2 : Isa::Scalar;
}

bool g_init = [] {
  set_isa(pick_default());
  return true;
}();

}  // namespace

bool cpu_supports_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa active_isa() { return g_isa; }

const char* isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

void set_isa(Isa isa) {
  if (isa == Isa::Avx2) {
#if defined(__x86_64__) || defined(_M_X64)
    if (!cpu_supports_avx2()) throw ValidationError("set_isa: CPU lacks AVX2+FMA");
    g_vt = &kAvx2;
#else
    throw ValidationError("set_isa: AVX2 unavailable on this architecture");
#endif
  } else {
    g_vt = &kScalar;
  }
  g_isa = isa;
}

void gemm(int64_t m, int64_t n, int64_t k, const double* a, const double* b,
          double* c, bool accumulate) {
  // Row-partitioned: each row of C is produced by exactly one thread with a
  // fixed k-order, so results do not depend on the thread count.
  if (m * n * k >= 1 << 17 && m >= 8) {
    auto fn = g_vt->gemm;
    ThreadPool::global().parallel_for(0, m, [=](int64_t i0, int64_t i1) {
      fn(i1 - i0, n, k, a + i0 * k, b, c + i0 * n, accumulate);
    });
  } else {
    g_vt->gemm(m, n, k, a, b, c, accumulate);
  }
}

void gemm_nt(int64_t m, int64_t n, int64_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  if (m * n * k >= 1 << 17 && m >= 8) {
    auto fn = g_vt->gemm_nt;
    ThreadPool::global().parallel_for(0, m, [=](int64_t i0, int64_t i1) {
      fn(i1 - i0, n, k, a + i0 * k, b, c + i0 * n, accumulate);
    });
  } else {
    g_vt->gemm_nt(m, n, k, a, b, c, accumulate);
  }
}

void add(const double* a, const double* b, double* out, int64_t n) { g_vt->add(a, b, out, n); }
void scale(const double* a, double k, double* out, int64_t n) { g_vt->scale(a, k, out, n); }
void axpy(double k, const double* x, double* y, int64_t n) { g_vt->axpy(k, x, y, n); }
void mul_accum(const double* a, const double* b, double* out, int64_t n) {
  g_vt->mul_accum(a, b, out, n);
}
void relu(const double* x, double* out, int64_t n) { g_vt->relu(x, out, n); }
void relu_bwd(const double* x, const double* g, double* gx, int64_t n) {
  g_vt->relu_bwd(x, g, gx, n);
}
void sigmoid(const double* x, double* out, int64_t n) { g_vt->sigmoid(x, out, n); }
void sigmoid_bwd(const double* y, const double* g, double* gx, int64_t n) {
  g_vt->sigmoid_bwd(y, g, gx, n);
}

}  // namespace stc::kernels
