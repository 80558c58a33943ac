#include "dynlm/linalg.hpp"

#include <cmath>
#include <cstring>
#include <vector>

#ifdef DYNLM_USE_CBLAS
#include <cblas.h>
extern "C" void openblas_set_num_threads(int);
#endif

namespace dynlm::linalg {

namespace {

#ifdef DYNLM_USE_CBLAS
// One thread: sequential kernels, bit-reproducible across runs.
struct BlasInit {
  BlasInit() { openblas_set_num_threads(1); }
};
const BlasInit blas_init;
#else

// Portable fallback: k-innermost loops with the j loop vectorizable.
void gemm_ref(bool ta, bool tb, int m, int n, int k, double alpha, const double* a,
              int lda, const double* b, int ldb, double beta, double* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    double* crow = c + std::size_t(i) * ldc;
    if (beta == 0.0) {
      std::memset(crow, 0, sizeof(double) * n);
    } else if (beta != 1.0) {
      for (int j = 0; j < n; ++j) crow[j] *= beta;
    }
    for (int p = 0; p < k; ++p) {
      const double av = ta ? a[std::size_t(p) * lda + i] : a[std::size_t(i) * lda + p];
      const double s = alpha * av;
      if (tb) {
        for (int j = 0; j < n; ++j) crow[j] += s * b[std::size_t(j) * ldb + p];
      } else {
        const double* brow = b + std::size_t(p) * ldb;
        for (int j = 0; j < n; ++j) crow[j] += s * brow[j];
      }
    }
  }
}
#endif

}  // namespace

void gemm_nn(int m, int n, int k, double alpha, const double* a, int lda,
             const double* b, int ldb, double beta, double* c, int ldc) {
#ifdef DYNLM_USE_CBLAS
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
#else
  gemm_ref(false, false, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
#endif
}

void gemm_nt(int m, int n, int k, double alpha, const double* a, int lda,
             const double* b, int ldb, double beta, double* c, int ldc) {
#ifdef DYNLM_USE_CBLAS
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
#else
  gemm_ref(false, true, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
#endif
}

void gemm_tn(int m, int n, int k, double alpha, const double* a, int lda,
             const double* b, int ldb, double beta, double* c, int ldc) {
#ifdef DYNLM_USE_CBLAS
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
#else
  gemm_ref(true, false, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
#endif
}

double spectral_norm(const double* a, int rows, int cols) {
  if (rows == 2 && cols == 2) {
    const double f = a[0] * a[0] + a[1] * a[1] + a[2] * a[2] + a[3] * a[3];
    const double det = a[0] * a[3] - a[1] * a[2];
    const double disc = std::fmax(f * f - 4.0 * det * det, 0.0);
    return std::sqrt((f + std::sqrt(disc)) * 0.5);
  }
  // power iteration on A^T A
  std::vector<double> v(cols, 0.0), av(rows), atav(cols);
  v[0] = 1.0;
  if (cols > 1) v[1] = 0.5;  // off-axis start avoids a zero first column
  double norm_v = std::sqrt(1.0 + (cols > 1 ? 0.25 : 0.0));
  for (double& x : v) x /= norm_v;
  double sigma = 0.0;
  for (int it = 0; it < 10000; ++it) {
    for (int i = 0; i < rows; ++i) {
      double s = 0.0;
      for (int j = 0; j < cols; ++j) s += a[std::size_t(i) * cols + j] * v[j];
      av[i] = s;
    }
    for (int j = 0; j < cols; ++j) {
      double s = 0.0;
      for (int i = 0; i < rows; ++i) s += a[std::size_t(i) * cols + j] * av[i];
      atav[j] = s;
    }
    double nn = 0.0;
    for (double x : atav) nn += x * x;
    nn = std::sqrt(nn);
    if (nn == 0.0) return 0.0;
    for (int j = 0; j < cols; ++j) v[j] = atav[j] / nn;
    const double next = std::sqrt(nn);
    if (std::fabs(next - sigma) <= 1e-12 * std::fmax(1.0, next)) return next;
    sigma = next;
  }
  return sigma;
}

}  // namespace dynlm::linalg
