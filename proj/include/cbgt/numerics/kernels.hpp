#pragma once

#include <cstddef>

// Dense row-major matrix kernels. Every output element is produced by the
// same sequence of floating-point operations regardless of how many rows the
// call covers, so a sample evaluated alone and inside a batch yields
// bit-identical results.
namespace cbgt::numerics::kernels {

/// C[i,j] (+)= sum_k A[i,k] * B[j,k];  A: MxK, B: NxK, C: MxN.
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate);

/// C[i,j] (+)= sum_k A[i,k] * B[k,j];  A: MxK, B: KxN, C: MxN.
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate);

/// C[i,j] += sum_r A[r,i] * B[r,j];  A: RxM, B: RxN, C: MxN. Always accumulates.
template <typename T>
void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t r, const T* a, const T* b, T* c);

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst);

}  // namespace cbgt::numerics::kernels
