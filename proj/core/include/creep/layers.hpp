#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "creep/ops.hpp"
#include "creep/rng.hpp"
#include "creep/tensor.hpp"

namespace creep {

/// Ordered (name, tensor) pairs. Names are dotted paths such as
/// "encoder.self_attn.w_q" and are stable across releases because checkpoints
/// key on them.
template <typename T>
using NamedParams = std::vector<std::pair<std::string, Tensor<T>>>;

/// Glorot/Xavier uniform bound sqrt(6 / (fan_in + fan_out)).
double xavier_bound(std::size_t fan_in, std::size_t fan_out);

/// y = x W + b over the last axis. W is (in, out).
template <typename T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;

  Linear() = default;
  Linear(std::size_t in_dim, std::size_t out_dim, SeededRng& rng);

  std::size_t in_dim() const { return weight.dim(0); }
  std::size_t out_dim() const { return weight.dim(1); }
  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, NamedParams<T>& out) const;
};

/// Gate blocks along the 4H axis are [input, forget, cell, output].
template <typename T>
struct LstmParams {
  Tensor<T> w_ih;  // (in, 4H)
  Tensor<T> w_hh;  // (H, 4H)
  Tensor<T> b_ih;  // (4H)
  Tensor<T> b_hh;  // (4H)

  LstmParams() = default;
  /// Weights uniform in +-1/sqrt(H); biases zero.
  LstmParams(std::size_t input_dim, std::size_t hidden_dim, SeededRng& rng);

  std::size_t input_dim() const { return w_ih.dim(0); }
  std::size_t hidden_dim() const { return w_hh.dim(0); }
  void collect(const std::string& prefix, NamedParams<T>& out) const;
};

template <typename T>
struct LstmState {
  Tensor<T> h;
  Tensor<T> c;
};

/// One recurrence step built from primitive ops. x_t is (B, in), state (B, H).
template <typename T>
LstmState<T> lstm_cell_step(const LstmParams<T>& params, const Tensor<T>& x_t, const LstmState<T>& prev);

/// Unidirectional LSTM with zero initial state: (B, L, in) -> (B, L, H).
template <typename T>
struct Lstm {
  LstmParams<T> params;

  Lstm() = default;
  Lstm(std::size_t input_dim, std::size_t hidden_dim, SeededRng& rng) : params(input_dim, hidden_dim, rng) {}

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, NamedParams<T>& out) const { params.collect(prefix, out); }
};

/// (B, L, in) -> (B, L, 2H); channels [0, H) run forward in time, [H, 2H)
/// run backward with outputs aligned to their input step.
template <typename T>
struct BiLstm {
  LstmParams<T> forward_dir;
  LstmParams<T> backward_dir;

  BiLstm() = default;
  BiLstm(std::size_t input_dim, std::size_t hidden_dim, SeededRng& rng);

  std::size_t hidden_dim() const { return forward_dir.hidden_dim(); }
  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, NamedParams<T>& out) const;
};

inline constexpr std::size_t kDefaultMaxLength = 10000;

/// Sinusoidal table (L, d): column 2i is sin(pos / 10000^(2i/d)), column 2i+1
/// the matching cosine.
template <typename T>
Tensor<T> positional_encoding(std::size_t length, std::size_t d_model, std::size_t max_length = kDefaultMaxLength);

template <typename T>
struct MultiHeadAttention {
  std::size_t heads = 1;
  std::size_t block_rows = 512;
  Linear<T> q_proj;
  Linear<T> k_proj;
  Linear<T> v_proj;
  Linear<T> out_proj;

  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t embed_dim, std::size_t num_heads, SeededRng& rng);

  std::size_t embed_dim() const { return q_proj.in_dim(); }
  Tensor<T> forward(const Tensor<T>& query, const Tensor<T>& key, const Tensor<T>& value) const;
  /// (B, heads, Lq, Lk) softmax weights, without gradient.
  Tensor<T> weights(const Tensor<T>& query, const Tensor<T>& key) const;
  void collect(const std::string& prefix, NamedParams<T>& out) const;
};

template <typename T>
struct LayerNorm {
  Tensor<T> gamma;
  Tensor<T> beta;
  T eps = T(1e-5);

  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);

  Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gamma, beta, eps); }
  void collect(const std::string& prefix, NamedParams<T>& out) const;
};

/// Post-norm encoder layer:
///   y = norm1(x + drop(attn(x, x, x)))
///   out = norm2(y + drop(ff2(relu(ff1(y)))))
template <typename T>
struct TransformerEncoderLayer {
  MultiHeadAttention<T> self_attn;
  Linear<T> ff1;
  Linear<T> ff2;
  LayerNorm<T> norm1;
  LayerNorm<T> norm2;
  double dropout_p = 0.1;

  TransformerEncoderLayer() = default;
  TransformerEncoderLayer(std::size_t d_model, std::size_t num_heads, std::size_t ff_dim, double dropout,
                          SeededRng& rng);

  Tensor<T> forward(const Tensor<T>& x, bool training, SeededRng& rng) const;
  void collect(const std::string& prefix, NamedParams<T>& out) const;
};

std::size_t parameter_count(const NamedParams<float>& params);
std::size_t parameter_count(const NamedParams<double>& params);

}  // namespace creep
