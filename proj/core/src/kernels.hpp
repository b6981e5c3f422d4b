#pragma once

// Dense kernels shared by the differentiable ops. All loops run in a fixed
// order so results are bit-reproducible for a given build.

#include <cstddef>
#include <vector>

namespace creep::kernels {

/// C(m x n) (+)= A(m x k) * B(k x n), row-major with leading dimensions.
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = T{0};
    }
    const T* arow = a + i * lda;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

/// C(m x n) (+)= A(k x m)^T * B(k x n).
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] = T{0};
    }
  }
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a + p * lda;
    const T* brow = b + p * ldb;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      T* crow = c + i * ldc;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

/// Row-major transpose of a (rows x cols) block into dst (cols x rows).
template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, std::size_t lds, T* dst, std::size_t ldd) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) dst[j * ldd + i] = src[i * lds + j];
  }
}

/// C(m x n) (+)= A(m x k) * B(n x k)^T. B is transposed into `scratch` first so
/// the inner loop is the same contiguous axpy as gemm_nn.
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
             std::size_t ldb, T* c, std::size_t ldc, bool accumulate, std::vector<T>& scratch) {
  scratch.resize(k * n);
  transpose(n, k, b, ldb, scratch.data(), n);
  gemm_nn(m, n, k, a, lda, scratch.data(), n, c, ldc, accumulate);
}

}  // namespace creep::kernels
