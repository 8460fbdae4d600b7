#include <cmath>
#include <cstring>

#include "stc/kernels.hpp"

namespace stc::kernels::detail {

void gemm_scalar(int64_t m, int64_t n, int64_t k, const double* a, const double* b,
                 double* c, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(double) * static_cast<size_t>(m * n));
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      double av = arow[p];
      const double* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt_scalar(int64_t m, int64_t n, int64_t k, const double* a, const double* b,
                    double* c, bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

void add_scalar(const double* a, const double* b, double* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void scale_scalar(const double* a, double k, double* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = k * a[i];
}

void axpy_scalar(double k, const double* x, double* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] += k * x[i];
}

void mul_accum_scalar(const double* a, const double* b, double* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] += a[i] * b[i];
}

void relu_scalar(const double* x, double* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd_scalar(const double* x, const double* g, double* gx, int64_t n) {
  // Subgradient at exactly 0 is 0.
  for (int64_t i = 0; i < n; ++i)
    if (x[i] > 0.0) gx[i] += g[i];
}

void sigmoid_scalar(const double* x, double* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) {
    double v = x[i];
    if (v >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
}

void sigmoid_bwd_scalar(const double* y, const double* g, double* gx, int64_t n) {
  for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
}

}  // namespace stc::kernels::detail
