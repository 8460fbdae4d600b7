#pragma once

#include <cstdint>

namespace stc::kernels {

// Instruction-set selection. Resolved once at startup: AVX2+FMA when the CPU
// supports both, scalar otherwise. STCNET_SIMD=scalar|avx2|auto overrides.
// Equivalence between the two implementations of every kernel is enforced by
// tests/test_kernels.cpp.
enum class Isa { Scalar, Avx2 };

Isa active_isa();
void set_isa(Isa isa);  // throws if the CPU lacks the requested features
bool cpu_supports_avx2();
const char* isa_name(Isa isa);

// C[m x n] = (or +=) A[m x k] * B[k x n], all row-major, contiguous.
void gemm(int64_t m, int64_t n, int64_t k, const double* a, const double* b,
          double* c, bool accumulate);

// C[m x n] = (or +=) A[m x k] * B^T where B is [n x k]: rows of both operands
// are contiguous dot products.
void gemm_nt(int64_t m, int64_t n, int64_t k, const double* a, const double* b,
             double* c, bool accumulate);

// Elementwise. *_into variants overwrite, accum variants add in place.
void add(const double* a, const double* b, double* out, int64_t n);
void scale(const double* a, double k, double* out, int64_t n);
void axpy(double k, const double* x, double* y, int64_t n);           // y += k*x
void mul_accum(const double* a, const double* b, double* out, int64_t n);  // out += a*b
void relu(const double* x, double* out, int64_t n);
void relu_bwd(const double* x, const double* g, double* gx, int64_t n);  // gx += g*(x>0)
void sigmoid(const double* x, double* out, int64_t n);
void sigmoid_bwd(const double* y, const double* g, double* gx, int64_t n);  // gx += g*y*(1-y)

namespace detail {
// Scalar reference implementations, exported for equivalence tests.
void gemm_scalar(int64_t m, int64_t n, int64_t k, const double* a, const double* b,
                 double* c, bool accumulate);
void gemm_nt_scalar(int64_t m, int64_t n, int64_t k, const double* a, const double* b,
                    double* c, bool accumulate);
void add_scalar(const double* a, const double* b, double* out, int64_t n);
void scale_scalar(const double* a, double k, double* out, int64_t n);
void axpy_scalar(double k, const double* x, double* y, int64_t n);
void mul_accum_scalar(const double* a, const double* b, double* out, int64_t n);
void relu_scalar(const double* x, double* out, int64_t n);
void relu_bwd_scalar(const double* x, const double* g, double* gx, int64_t n);
void sigmoid_scalar(const double* x, double* out, int64_t n);
void sigmoid_bwd_scalar(const double* y, const double* g, double* gx, int64_t n);

#if defined(__x86_64__) || defined(_M_X64)
void gemm_avx2(int64_t m, int64_t n, int64_t k, const double* a, const double* b,
               double* c, bool accumulate);
void gemm_nt_avx2(int64_t m, int64_t n, int64_t k, const double* a, const double* b,
                  double* c, bool accumulate);
void add_avx2(const double* a, const double* b, double* out, int64_t n);
void scale_avx2(const double* a, double k, double* out, int64_t n);
void axpy_avx2(double k, const double* x, double* y, int64_t n);
void mul_accum_avx2(const double* a, const double* b, double* out, int64_t n);
void relu_avx2(const double* x, double* out, int64_t n);
void relu_bwd_avx2(const double* x, const double* g, double* gx, int64_t n);
#endif
}  // namespace detail

}  // namespace stc::kernels
