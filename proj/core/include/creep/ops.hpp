#pragma once

#include <cstddef>
#include <vector>

#include "creep/rng.hpp"
#include "creep/tensor.hpp"

namespace creep {

// Broadcasting aligns trailing dimensions; a dimension broadcasts when it is 1
// or missing. Shape errors are reported as ShapeMismatch with both shapes.

Shape broadcast_shapes(const Shape& a, const Shape& b);

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T offset);

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a) { return scale(a, T{-1}); }

/// (..., m, k) x (k, n) or (..., m, k) x (..., k, n) with equal batch dims.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// (..., m, k) x (..., n, k)^T.
template <typename T> Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& order);
template <typename T> Tensor<T> transpose(const Tensor<T>& a, std::ptrdiff_t axis0, std::ptrdiff_t axis1);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::ptrdiff_t axis);
template <typename T> Tensor<T> slice(const Tensor<T>& a, std::ptrdiff_t axis, std::size_t start, std::size_t length);
template <typename T> Tensor<T> flip(const Tensor<T>& a, std::ptrdiff_t axis);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> sum(const Tensor<T>& a, std::ptrdiff_t axis);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a, std::ptrdiff_t axis);

template <typename T> Tensor<T> exp(const Tensor<T>& a);
/// exp(x) - 1 without cancellation near zero.
template <typename T> Tensor<T> expm1(const Tensor<T>& a);
template <typename T> Tensor<T> log(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> tanh(const Tensor<T>& a);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> square(const Tensor<T>& a);

/// Max-subtracted softmax along `axis`.
template <typename T> Tensor<T> softmax(const Tensor<T>& a, std::ptrdiff_t axis);

/// Normalizes over the last axis (biased variance), then applies gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5));

/// Inverted dropout. Eval mode and p == 0 return `x` itself.
template <typename T> Tensor<T> dropout(const Tensor<T>& x, double p, bool training, SeededRng& rng);

/// mean((pred - target)^2) over all elements.
template <typename T> Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target);

/// Whole-sequence LSTM with zero initial state.
///
/// x is (B, L, in); w_ih (in, 4H); w_hh (H, 4H); biases (4H). Gate blocks are
/// ordered [input, forget, cell, output]. With `reverse` the recurrence runs
/// from the last step to the first and outputs stay aligned with their input
/// steps. Returns (B, L, H). Backward is full backpropagation through time.
template <typename T>
Tensor<T> lstm_sequence(const Tensor<T>& x, const Tensor<T>& w_ih, const Tensor<T>& w_hh,
                        const Tensor<T>& b_ih, const Tensor<T>& b_hh, bool reverse);

/// Multi-head scaled dot-product attention on already projected inputs.
///
/// q, k, v are (B, L, d) with d divisible by `heads`; head h uses channels
/// [h*d/heads, (h+1)*d/heads). No mask. Scores are materialized `block_rows`
/// query rows at a time, and the backward pass recomputes them per block, so
/// memory stays O(block_rows * L) per head.
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads,
                    std::size_t block_rows = 512);

/// Softmax attention weights (B, heads, Lq, Lk); not differentiable.
template <typename T>
Tensor<T> attention_weights(const Tensor<T>& q, const Tensor<T>& k, std::size_t heads);

template <typename T> Tensor<T> uniform(const Shape& shape, double lo, double hi, SeededRng& rng);
template <typename T> Tensor<T> standard_normal(const Shape& shape, SeededRng& rng);

template <typename T> bool all_finite(const Tensor<T>& a);

}  // namespace creep
