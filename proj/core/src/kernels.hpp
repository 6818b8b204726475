#pragma once

#include <cstddef>
#include <span>

namespace ton::kernels {

// Row-major C[m,n] += A[m,k] * B[k,n].
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
// C[m,n] += A[m,k] * B[n,k]^T.
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
// C[m,n] += A[k,m]^T * B[k,n].
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);

// In-place numerically stable softmax / log-softmax of one row.
void softmax_inplace(std::span<double> row);
void log_softmax_inplace(std::span<double> row);

}  // namespace ton::kernels
