#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cstring>

#include "stc/kernels.hpp"

namespace stc::kernels::detail {

namespace {

// 4x8 register tile: 4 rows of C, two ymm (8 doubles) per row.
inline void gemm_tile_4x8(int64_t k, int64_t lda, int64_t ldb, int64_t ldc,
                          const double* a, const double* b, double* c) {
  __m256d c00 = _mm256_loadu_pd(c);
  __m256d c01 = _mm256_loadu_pd(c + 4);
  __m256d c10 = _mm256_loadu_pd(c + ldc);
  __m256d c11 = _mm256_loadu_pd(c + ldc + 4);
  __m256d c20 = _mm256_loadu_pd(c + 2 * ldc);
  __m256d c21 = _mm256_loadu_pd(c + 2 * ldc + 4);
  __m256d c30 = _mm256_loadu_pd(c + 3 * ldc);
  __m256d c31 = _mm256_loadu_pd(c + 3 * ldc + 4);
  for (int64_t p = 0; p < k; ++p) {
    __m256d b0 = _mm256_loadu_pd(b + p * ldb);
    __m256d b1 = _mm256_loadu_pd(b + p * ldb + 4);
    __m256d a0 = _mm256_broadcast_sd(a + p);
    c00 = _mm256_fmadd_pd(a0, b0, c00);
    c01 = _mm256_fmadd_pd(a0, b1, c01);
    a0 = _mm256_broadcast_sd(a + lda + p);
    c10 = _mm256_fmadd_pd(a0, b0, c10);
    c11 = _mm256_fmadd_pd(a0, b1, c11);
    a0 = _mm256_broadcast_sd(a + 2 * lda + p);
    c20 = _mm256_fmadd_pd(a0, b0, c20);
    c21 = _mm256_fmadd_pd(a0, b1, c21);
    a0 = _mm256_broadcast_sd(a + 3 * lda + p);
    c30 = _mm256_fmadd_pd(a0, b0, c30);
    c31 = _mm256_fmadd_pd(a0, b1, c31);
  }
  _mm256_storeu_pd(c, c00);
  _mm256_storeu_pd(c + 4, c01);
  _mm256_storeu_pd(c + ldc, c10);
  _mm256_storeu_pd(c + ldc + 4, c11);
  _mm256_storeu_pd(c + 2 * ldc, c20);
  _mm256_storeu_pd(c + 2 * ldc + 4, c21);
  _mm256_storeu_pd(c + 3 * ldc, c30);
  _mm256_storeu_pd(c + 3 * ldc + 4, c31);
}

// Rows m0..m0+mr (mr<4) or column tail: plain vector-per-row accumulation.
inline void gemm_edge(int64_t mr, int64_t n0, int64_t n, int64_t k, int64_t lda,
                      int64_t ldb, int64_t ldc, const double* a, const double* b,
                      double* c) {
  for (int64_t i = 0; i < mr; ++i) {
    const double* arow = a + i * lda;
    double* crow = c + i * ldc;
    for (int64_t p = 0; p < k; ++p) {
      double av = arow[p];
      const double* brow = b + p * ldb;
      for (int64_t j = n0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swap = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swap));
}

}  // namespace

void gemm_avx2(int64_t m, int64_t n, int64_t k, const double* a, const double* b,
               double* c, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(double) * static_cast<size_t>(m * n));
  int64_t m4 = m - m % 4;
  int64_t n8 = n - n % 8;
  for (int64_t i = 0; i < m4; i += 4) {
    for (int64_t j = 0; j < n8; j += 8)
      gemm_tile_4x8(k, k, n, n, a + i * k, b + j, c + i * n + j);
    if (n8 < n) gemm_edge(4, n8, n, k, k, n, n, a + i * k, b, c + i * n);
  }
  if (m4 < m) gemm_edge(m - m4, 0, n, k, k, n, n, a + m4 * k, b, c + m4 * n);
}

void gemm_nt_avx2(int64_t m, int64_t n, int64_t k, const double* a, const double* b,
                  double* c, bool accumulate) {
  int64_t k4 = k - k % 4;
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    int64_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + j * k;
      const double* b1 = b0 + k;
      const double* b2 = b1 + k;
      const double* b3 = b2 + k;
      __m256d acc0 = _mm256_setzero_pd();
      __m256d acc1 = _mm256_setzero_pd();
      __m256d acc2 = _mm256_setzero_pd();
      __m256d acc3 = _mm256_setzero_pd();
      for (int64_t p = 0; p < k4; p += 4) {
        __m256d av = _mm256_loadu_pd(arow + p);
        acc0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + p), acc0);
        acc1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + p), acc1);
        acc2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + p), acc2);
        acc3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + p), acc3);
      }
      double s0 = hsum(acc0), s1 = hsum(acc1), s2 = hsum(acc2), s3 = hsum(acc3);
      for (int64_t p = k4; p < k; ++p) {
        double av = arow[p];
        s0 += av * b0[p];
        s1 += av * b1[p];
        s2 += av * b2[p];
        s3 += av * b3[p];
      }
      if (accumulate) {
        crow[j] += s0;
        crow[j + 1] += s1;
        crow[j + 2] += s2;
        crow[j + 3] += s3;
      } else {
        crow[j] = s0;
        crow[j + 1] = s1;
        crow[j + 2] = s2;
        crow[j + 3] = s3;
      }
    }
    for (; j < n; ++j) {
      const double* brow = b + j * k;
      __m256d acc = _mm256_setzero_pd();
      for (int64_t p = 0; p < k4; p += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(arow + p), _mm256_loadu_pd(brow + p), acc);
      double s = hsum(acc);
      for (int64_t p = k4; p < k; ++p) s += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + s : s;
    }
  }
}

void add_avx2(const double* a, const double* b, double* out, int64_t n) {
  int64_t n4 = n - n % 4;
  for (int64_t i = 0; i < n4; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (int64_t i = n4; i < n; ++i) out[i] = a[i] + b[i];
}

void scale_avx2(const double* a, double k, double* out, int64_t n) {
  __m256d kv = _mm256_set1_pd(k);
  int64_t n4 = n - n % 4;
  for (int64_t i = 0; i < n4; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(kv, _mm256_loadu_pd(a + i)));
  for (int64_t i = n4; i < n; ++i) out[i] = k * a[i];
}

// Elementwise accumulations avoid FMA on purpose: they are memory-bound and
// the separate multiply+add keeps them bit-exact against the scalar reference.
void axpy_avx2(double k, const double* x, double* y, int64_t n) {
  __m256d kv = _mm256_set1_pd(k);
  int64_t n4 = n - n % 4;
  for (int64_t i = 0; i < n4; i += 4) {
    __m256d prod = _mm256_mul_pd(kv, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (int64_t i = n4; i < n; ++i) y[i] += k * x[i];
}

void mul_accum_avx2(const double* a, const double* b, double* out, int64_t n) {
  int64_t n4 = n - n % 4;
  for (int64_t i = 0; i < n4; i += 4) {
    __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(out + i), prod));
  }
  for (int64_t i = n4; i < n; ++i) out[i] += a[i] * b[i];
}

void relu_avx2(const double* x, double* out, int64_t n) {
  __m256d zero = _mm256_setzero_pd();
  int64_t n4 = n - n % 4;
  // Operand order makes max(-0.0, +0.0) return +0.0, matching the scalar path.
  for (int64_t i = 0; i < n4; i += 4)
    _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  for (int64_t i = n4; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd_avx2(const double* x, const double* g, double* gx, int64_t n) {
  __m256d zero = _mm256_setzero_pd();
  int64_t n4 = n - n % 4;
  for (int64_t i = 0; i < n4; i += 4) {
    __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    __m256d gm = _mm256_and_pd(mask, _mm256_loadu_pd(g + i));
    _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), gm));
  }
  for (int64_t i = n4; i < n; ++i)
    if (x[i] > 0.0) gx[i] += g[i];
}

}  // namespace stc::kernels::detail

#endif  // x86_64
