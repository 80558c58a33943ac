#pragma once

#include <cstddef>

namespace dynlm::linalg {

// Row-major double GEMM wrappers. C is M x N with leading dimension ldc;
// alpha scales the product, beta scales the existing C contents.
// Backed by single-threaded cblas when built with DYNLM_USE_CBLAS, by a
// portable blocked kernel otherwise; both are deterministic.

// C = alpha * A(MxK) * B(KxN) + beta * C
void gemm_nn(int m, int n, int k, double alpha, const double* a, int lda,
             const double* b, int ldb, double beta, double* c, int ldc);

// C = alpha * A(MxK) * B(NxK)^T + beta * C
void gemm_nt(int m, int n, int k, double alpha, const double* a, int lda,
             const double* b, int ldb, double beta, double* c, int ldc);

// C = alpha * A(KxM)^T * B(KxN) + beta * C
void gemm_tn(int m, int n, int k, double alpha, const double* a, int lda,
             const double* b, int ldb, double beta, double* c, int ldc);

// Largest singular value. For 2x2 a closed form; otherwise power iteration
// on A^T A to tolerance 1e-12 from a fixed start vector.
double spectral_norm(const double* a, int rows, int cols);

}  // namespace dynlm::linalg
