#pragma once

#include <cstddef>

namespace mf::kernels {

// Dense row-major matmul kernels. The `parallel` flag switches the OpenMP
// path; the serial path is the reference the tests compare against.
// accumulate=false overwrites C, true adds into it.

// C[m x n] (+)= A[m x k] * B[k x n]
void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate,
               bool parallel);
// C[m x n] (+)= A[m x k] * B[n x k]^T
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate,
               bool parallel);
// C[k x n] (+)= A[m x k]^T * B[m x n]
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate,
               bool parallel);

}  // namespace mf::kernels
