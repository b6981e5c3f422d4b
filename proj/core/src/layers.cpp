#include "creep/layers.hpp"

#include <cmath>

#include "creep/error.hpp"

namespace creep {

double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

namespace {

template <typename T>
Tensor<T> symmetric_uniform(const Shape& shape, double bound, SeededRng& rng) {
  return uniform<T>(shape, -bound, bound, rng).set_requires_grad();
}

template <typename T>
Tensor<T> zero_param(const Shape& shape) {
  return Tensor<T>::zeros(shape).set_requires_grad();
}

template <typename T>
void check_last_dim(const Tensor<T>& x, std::size_t expected, const char* what) {
  if (x.rank() == 0 || x.shape().back() != expected) {
    throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": input " + shape_str(x.shape()) +
                                              " does not end in " + std::to_string(expected));
  }
}

}  // namespace

template <typename T>
Linear<T>::Linear(std::size_t in_dim, std::size_t out_dim, SeededRng& rng)
    : weight(symmetric_uniform<T>({in_dim, out_dim}, xavier_bound(in_dim, out_dim), rng)),
      bias(zero_param<T>({out_dim})) {}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) const {
  check_last_dim(x, in_dim(), "linear");
  if (x.rank() == 1) return add(reshape(matmul(reshape(x, {1, in_dim()}), weight), {out_dim()}), bias);
  return add(matmul(x, weight), bias);
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

template <typename T>
LstmParams<T>::LstmParams(std::size_t input_dim, std::size_t hidden_dim, SeededRng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  w_ih = symmetric_uniform<T>({input_dim, 4 * hidden_dim}, bound, rng);
  w_hh = symmetric_uniform<T>({hidden_dim, 4 * hidden_dim}, bound, rng);
  b_ih = zero_param<T>({4 * hidden_dim});
  b_hh = zero_param<T>({4 * hidden_dim});
}

template <typename T>
void LstmParams<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
  out.emplace_back(prefix + ".w_ih", w_ih);
  out.emplace_back(prefix + ".w_hh", w_hh);
  out.emplace_back(prefix + ".b_ih", b_ih);
  out.emplace_back(prefix + ".b_hh", b_hh);
}

template <typename T>
LstmState<T> lstm_cell_step(const LstmParams<T>& params, const Tensor<T>& x_t, const LstmState<T>& prev) {
  const std::size_t hidden = params.hidden_dim();
  if (x_t.rank() != 2 || x_t.dim(1) != params.input_dim()) {
    throw Error(ErrorKind::ShapeMismatch, "lstm cell input " + shape_str(x_t.shape()));
  }
  if (prev.h.shape() != Shape{x_t.dim(0), hidden} || prev.c.shape() != prev.h.shape()) {
    throw Error(ErrorKind::ShapeMismatch, "lstm cell state " + shape_str(prev.h.shape()) + " / " +
                                              shape_str(prev.c.shape()));
  }
  const auto z = add(add(matmul(x_t, params.w_ih), matmul(prev.h, params.w_hh)), add(params.b_ih, params.b_hh));
  const auto i = sigmoid(slice(z, 1, 0, hidden));
  const auto f = sigmoid(slice(z, 1, hidden, hidden));
  const auto g = tanh(slice(z, 1, 2 * hidden, hidden));
  const auto o = sigmoid(slice(z, 1, 3 * hidden, hidden));
  auto c = add(mul(f, prev.c), mul(i, g));
  auto h = mul(o, tanh(c));
  return {std::move(h), std::move(c)};
}

template <typename T>
Tensor<T> Lstm<T>::forward(const Tensor<T>& x) const {
  return lstm_sequence(x, params.w_ih, params.w_hh, params.b_ih, params.b_hh, false);
}

template <typename T>
BiLstm<T>::BiLstm(std::size_t input_dim, std::size_t hidden_dim, SeededRng& rng)
    : forward_dir(input_dim, hidden_dim, rng), backward_dir(input_dim, hidden_dim, rng) {}

template <typename T>
Tensor<T> BiLstm<T>::forward(const Tensor<T>& x) const {
  const auto& f = forward_dir;
  const auto& b = backward_dir;
  auto fwd = lstm_sequence(x, f.w_ih, f.w_hh, f.b_ih, f.b_hh, false);
  auto bwd = lstm_sequence(x, b.w_ih, b.w_hh, b.b_ih, b.b_hh, true);
  return concat<T>({fwd, bwd}, -1);
}

template <typename T>
void BiLstm<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
  forward_dir.collect(prefix + ".forward", out);
  backward_dir.collect(prefix + ".backward", out);
}

template <typename T>
Tensor<T> positional_encoding(std::size_t length, std::size_t d_model, std::size_t max_length) {
  if (length > max_length) {
    throw Error(ErrorKind::MaxLengthExceeded, "sequence length " + std::to_string(length) +
                                                  " exceeds positional encoding maximum " +
                                                  std::to_string(max_length));
  }
  if (d_model == 0 || d_model % 2 != 0) {
    throw Error(ErrorKind::InvalidArgument, "positional encoding needs an even model dim, got " +
                                                std::to_string(d_model));
  }
  std::vector<T> table(length * d_model);
  for (std::size_t i = 0; i < d_model / 2; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(2 * i) / static_cast<double>(d_model));
    for (std::size_t pos = 0; pos < length; ++pos) {
      const double angle = static_cast<double>(pos) * freq;
      table[pos * d_model + 2 * i] = static_cast<T>(std::sin(angle));
      table[pos * d_model + 2 * i + 1] = static_cast<T>(std::cos(angle));
    }
  }
  return Tensor<T>({length, d_model}, std::move(table));
}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(std::size_t embed_dim, std::size_t num_heads, SeededRng& rng)
    : heads(num_heads) {
  if (num_heads == 0 || embed_dim % num_heads != 0) {
    throw Error(ErrorKind::HeadDivisibility, "embed dim " + std::to_string(embed_dim) + " not divisible by " +
                                                 std::to_string(num_heads) + " heads");
  }
  q_proj = Linear<T>(embed_dim, embed_dim, rng);
  k_proj = Linear<T>(embed_dim, embed_dim, rng);
  v_proj = Linear<T>(embed_dim, embed_dim, rng);
  out_proj = Linear<T>(embed_dim, embed_dim, rng);
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::forward(const Tensor<T>& query, const Tensor<T>& key, const Tensor<T>& value) const {
  if (query.rank() != 3 || key.rank() != 3 || value.shape() != key.shape() || query.dim(0) != key.dim(0)) {
    throw Error(ErrorKind::ShapeMismatch, "attention inputs " + shape_str(query.shape()) + ", " +
                                              shape_str(key.shape()) + ", " + shape_str(value.shape()));
  }
  const auto q = q_proj.forward(query);
  const auto k = k_proj.forward(key);
  const auto v = v_proj.forward(value);
  return out_proj.forward(attention(q, k, v, heads, block_rows));
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::weights(const Tensor<T>& query, const Tensor<T>& key) const {
  NoGradGuard guard;
  return attention_weights(q_proj.forward(query), k_proj.forward(key), heads);
}

template <typename T>
void MultiHeadAttention<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
  q_proj.collect(prefix + ".q_proj", out);
  k_proj.collect(prefix + ".k_proj", out);
  v_proj.collect(prefix + ".v_proj", out);
  out_proj.collect(prefix + ".out_proj", out);
}

template <typename T>
LayerNorm<T>::LayerNorm(std::size_t dim)
    : gamma(Tensor<T>::ones({dim}).set_requires_grad()), beta(zero_param<T>({dim})) {}

template <typename T>
void LayerNorm<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

template <typename T>
TransformerEncoderLayer<T>::TransformerEncoderLayer(std::size_t d_model, std::size_t num_heads, std::size_t ff_dim,
                                                    double dropout, SeededRng& rng)
    : self_attn(d_model, num_heads, rng),
      ff1(d_model, ff_dim, rng),
      ff2(ff_dim, d_model, rng),
      norm1(d_model),
      norm2(d_model),
      dropout_p(dropout) {}

template <typename T>
Tensor<T> TransformerEncoderLayer<T>::forward(const Tensor<T>& x, bool training, SeededRng& rng) const {
  check_last_dim(x, self_attn.embed_dim(), "encoder layer");
  const auto attn = self_attn.forward(x, x, x);
  const auto y = norm1.forward(add(x, dropout(attn, dropout_p, training, rng)));
  const auto ff = ff2.forward(relu(ff1.forward(y)));
  return norm2.forward(add(y, dropout(ff, dropout_p, training, rng)));
}

template <typename T>
void TransformerEncoderLayer<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
  self_attn.collect(prefix + ".self_attn", out);
  ff1.collect(prefix + ".ff1", out);
  ff2.collect(prefix + ".ff2", out);
  norm1.collect(prefix + ".norm1", out);
  norm2.collect(prefix + ".norm2", out);
}

std::size_t parameter_count(const NamedParams<float>& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

std::size_t parameter_count(const NamedParams<double>& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

#define CREEP_INSTANTIATE_LAYERS(T)                                                                   \
  template struct Linear<T>;                                                                          \
  template struct LstmParams<T>;                                                                      \
  template struct Lstm<T>;                                                                            \
  template struct BiLstm<T>;                                                                          \
  template struct MultiHeadAttention<T>;                                                              \
  template struct LayerNorm<T>;                                                                       \
  template struct TransformerEncoderLayer<T>;                                                         \
  template LstmState<T> lstm_cell_step(const LstmParams<T>&, const Tensor<T>&, const LstmState<T>&); \
  template Tensor<T> positional_encoding<T>(std::size_t, std::size_t, std::size_t);

CREEP_INSTANTIATE_LAYERS(float)
CREEP_INSTANTIATE_LAYERS(double)

#undef CREEP_INSTANTIATE_LAYERS

}  // namespace creep
