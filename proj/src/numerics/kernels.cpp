#include "cbgt/numerics/kernels.hpp"

#include <algorithm>
#include <array>

namespace cbgt::numerics::kernels {
namespace {

constexpr std::size_t kLanes = 8;

template <typename T>
inline T reduce_lanes(const T* acc) {
  const T s0 = (acc[0] + acc[4]) + (acc[2] + acc[6]);
  const T s1 = (acc[1] + acc[5]) + (acc[3] + acc[7]);
  return s0 + s1;
}

// Dot products of one A row against `Cols` B rows. Lane l of every
// accumulator only ever receives products with index = l (mod kLanes), so
// the result for one (row, col) pair does not depend on Cols.
template <typename T, std::size_t Cols>
inline void dot_block(const T* a, const T* const* b, std::size_t k, T* out) {
  T acc[Cols][kLanes] = {};
  std::size_t p = 0;
  for (; p + kLanes <= k; p += kLanes) {
    for (std::size_t c = 0; c < Cols; ++c) {
      const T* bc = b[c] + p;
      for (std::size_t l = 0; l < kLanes; ++l) acc[c][l] += a[p + l] * bc[l];
    }
  }
  for (std::size_t l = 0; p + l < k; ++l) {
    for (std::size_t c = 0; c < Cols; ++c) acc[c][l] += a[p + l] * b[c][p + l];
  }
  for (std::size_t c = 0; c < Cols; ++c) out[c] = reduce_lanes(acc[c]);
}

}  // namespace

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  constexpr std::size_t kBlock = 4;
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    T* ci = c + i * n;
    std::size_t j = 0;
    T out[kBlock];
    for (; j + kBlock <= n; j += kBlock) {
      const T* rows[kBlock] = {b + j * k, b + (j + 1) * k, b + (j + 2) * k, b + (j + 3) * k};
      dot_block<T, kBlock>(ai, rows, k, out);
      for (std::size_t q = 0; q < kBlock; ++q) ci[j + q] = accumulate ? ci[j + q] + out[q] : out[q];
    }
    for (; j < n; ++j) {
      const T* rows[1] = {b + j * k};
      dot_block<T, 1>(ai, rows, k, out);
      ci[j] = accumulate ? ci[j] + out[0] : out[0];
    }
  }
}

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    if (!accumulate) std::fill(ci, ci + n, T{0});
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T s = ai[p];
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += s * bp[j];
    }
  }
}

template <typename T>
void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t r, const T* a, const T* b, T* c) {
  for (std::size_t q = 0; q < r; ++q) {
    const T* aq = a + q * m;
    const T* bq = b + q * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T s = aq[i];
      T* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += s * bq[j];
    }
  }
}

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst) {
  constexpr std::size_t kTile = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += kTile) {
    const std::size_t i1 = std::min(rows, i0 + kTile);
    for (std::size_t j0 = 0; j0 < cols; j0 += kTile) {
      const std::size_t j1 = std::min(cols, j0 + kTile);
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = j0; j < j1; ++j) dst[j * rows + i] = src[i * cols + j];
    }
  }
}

#define CBGT_INSTANTIATE(T)                                                                      \
  template void gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool); \
  template void gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool); \
  template void gemm_tn_acc<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*);   \
  template void transpose<T>(std::size_t, std::size_t, const T*, T*);

CBGT_INSTANTIATE(float)
CBGT_INSTANTIATE(double)
#undef CBGT_INSTANTIATE

}  // namespace cbgt::numerics::kernels
