#include <cmath>

#include "creep/error.hpp"
#include "creep/layers.hpp"
#include "doctest.h"
#include "harness.hpp"

using namespace creep;
using TensorD = Tensor<double>;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected creep::Error");
  return ErrorKind::InvalidArgument;
}

LstmParams<double> zero_lstm(std::size_t in, std::size_t h) {
  LstmParams<double> p;
  p.w_ih = TensorD::zeros({in, 4 * h});
  p.w_hh = TensorD::zeros({h, 4 * h});
  p.b_ih = TensorD::zeros({4 * h});
  p.b_hh = TensorD::zeros({4 * h});
  return p;
}

Linear<double> identity_linear(std::size_t d) {
  Linear<double> l;
  l.weight = TensorD::zeros({d, d});
  for (std::size_t i = 0; i < d; ++i) l.weight.mutable_data()[i * d + i] = 1.0;
  l.bias = TensorD::zeros({d});
  return l;
}

}  // namespace

TEST_CASE("lstm cell with zero parameters") {
  SeededRng rng(1);
  const auto p = zero_lstm(3, 4);
  const auto x = uniform<double>({2, 3}, -1, 1, rng);
  const auto s0 = lstm_cell_step(p, x, {TensorD::zeros({2, 4}), TensorD::zeros({2, 4})});
  CHECK(s0.h.shape() == Shape{2, 4});
  CHECK(s0.c.shape() == Shape{2, 4});
  for (double v : s0.c.data()) CHECK(v == 0.0);
  for (double v : s0.h.data()) CHECK(v == 0.0);

  const auto c = uniform<double>({2, 4}, -1, 1, rng);
  const auto s1 = lstm_cell_step(p, x, {TensorD::zeros({2, 4}), c});
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(s1.c.data()[i] == doctest::Approx(0.5 * c.data()[i]).epsilon(1e-15));
    CHECK(s1.h.data()[i] == doctest::Approx(0.5 * std::tanh(0.5 * c.data()[i])).epsilon(1e-15));
  }
}

TEST_CASE("fused sequence equals the cell recurrence") {
  SeededRng rng(2);
  LstmParams<double> p(3, 5, rng);
  p.b_ih = uniform<double>({20}, -0.5, 0.5, rng);
  const auto x = uniform<double>({2, 6, 3}, -1, 1, rng);
  const auto fused = lstm_sequence(x, p.w_ih, p.w_hh, p.b_ih, p.b_hh, false);
  LstmState<double> s{TensorD::zeros({2, 5}), TensorD::zeros({2, 5})};
  for (std::size_t t = 0; t < 6; ++t) {
    s = lstm_cell_step(p, reshape(slice(x, 1, t, 1), {2, 3}), s);
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t j = 0; j < 5; ++j) {
        CHECK(fused.at({b, t, j}) == doctest::Approx(s.h.at({b, j})).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("bilstm shapes") {
  SeededRng rng(3);
  BiLstm<double> bi(3, 32, rng);
  CHECK(bi.forward(uniform<double>({2, 9, 3}, 0, 1, rng)).shape() == Shape{2, 9, 64});
  const auto one = bi.forward(uniform<double>({1, 1, 3}, 0, 1, rng));
  CHECK(one.shape() == Shape{1, 1, 64});
  CHECK(all_finite(one));
  CHECK(kind_of([&] { bi.forward(TensorD({2, 9, 4})); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("positional encoding") {
  const auto pe = positional_encoding<double>(10, 64);
  CHECK(pe.shape() == Shape{10, 64});
  for (std::size_t c = 0; c < 64; ++c) CHECK(pe.at({0, c}) == (c % 2 == 0 ? 0.0 : 1.0));
  CHECK(pe.at({1, 0}) == doctest::Approx(0.841471).epsilon(1e-6));
  CHECK(pe.at({1, 1}) == doctest::Approx(std::cos(1.0)).epsilon(1e-15));
  CHECK(pe.at({3, 2}) == doctest::Approx(std::sin(3.0 / std::pow(10000.0, 2.0 / 64))).epsilon(1e-14));
  for (double v : pe.data()) CHECK(std::abs(v) <= 1.0);
  CHECK(kind_of([] { positional_encoding<double>(10'001, 64); }) == ErrorKind::MaxLengthExceeded);
  CHECK(positional_encoding<double>(10'000, 64).shape() == Shape{10'000, 64});
}

TEST_CASE("uniform attention") {
  SeededRng rng(4);
  MultiHeadAttention<double> mha(4, 2, rng);
  mha.q_proj.weight = TensorD::zeros({4, 4});
  mha.k_proj.weight = TensorD::zeros({4, 4});
  mha.v_proj = identity_linear(4);
  mha.out_proj = identity_linear(4);
  const auto x = uniform<double>({2, 5, 4}, -1, 1, rng);
  const auto v = uniform<double>({2, 5, 4}, -1, 1, rng);
  const auto y = mha.forward(x, x, v);
  const auto avg = mean(v, 1);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t l = 0; l < 5; ++l) {
      for (std::size_t c = 0; c < 4; ++c) CHECK(y.at({b, l, c}) == doctest::Approx(avg.at({b, c})).epsilon(1e-14));
    }
  }
}

TEST_CASE("single-key attention") {
  SeededRng rng(5);
  MultiHeadAttention<double> mha(8, 4, rng);
  mha.v_proj.bias = uniform<double>({8}, -1, 1, rng);
  mha.out_proj.bias = uniform<double>({8}, -1, 1, rng);
  const auto q = uniform<double>({3, 1, 8}, -1, 1, rng);
  const auto v = uniform<double>({3, 1, 8}, -1, 1, rng);
  const auto y = mha.forward(q, q, v);
  const auto expected = mha.out_proj.forward(mha.v_proj.forward(v));
  for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == doctest::Approx(expected.data()[i]).epsilon(1e-14));

  const auto w = mha.weights(uniform<double>({2, 6, 8}, -1, 1, rng), uniform<double>({2, 6, 8}, -1, 1, rng));
  for (std::size_t r = 0; r < 2 * 4 * 6; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 6; ++c) s += w.data()[r * 6 + c];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK(kind_of([&] { MultiHeadAttention<double>(6, 4, rng); }) == ErrorKind::HeadDivisibility);
}

TEST_CASE("layer norm statistics") {
  SeededRng rng(6);
  const LayerNorm<double> norm(16);
  const auto y = norm.forward(uniform<double>({3, 4, 16}, -5, 5, rng));
  for (std::size_t r = 0; r < 12; ++r) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 16; ++c) m += y.data()[r * 16 + c];
    m /= 16;
    for (std::size_t c = 0; c < 16; ++c) v += std::pow(y.data()[r * 16 + c] - m, 2);
    v /= 16;
    CHECK(std::abs(m) < 1e-5);
    CHECK(std::abs(v - 1.0) < 1e-5);
  }
}

TEST_CASE("encoder layer") {
  SeededRng rng(7);
  TransformerEncoderLayer<double> enc(64, 4, 256, 0.1, rng);
  const auto x = uniform<double>({2, 6, 64}, -1, 1, rng);
  const auto a = enc.forward(x, false, rng);
  const auto b = enc.forward(x, false, rng);
  CHECK(a.shape() == Shape{2, 6, 64});
  CHECK(a.values() == b.values());
  const auto t = enc.forward(x, true, rng);
  CHECK(t.values() != a.values());
}

TEST_CASE("parameter naming is stable") {
  SeededRng rng(8);
  TransformerEncoderLayer<float> enc(8, 2, 16, 0.1, rng);
  NamedParams<float> named;
  enc.collect("encoder", named);
  CHECK(named.size() == 16);
  CHECK(named.front().first.rfind("encoder.", 0) == 0);
  CHECK(parameter_count(named) == 4 * (8 * 8 + 8) + (8 * 16 + 16) + (16 * 8 + 8) + 4 * 8);
}

TEST_CASE("layer gradient checks") {
  for (std::uint64_t seed : {7u, 11u}) {
    for (const auto& check : testing::layer_gradchecks(seed)) {
      CAPTURE(check.name);
      CHECK(check.result.checked > 0);
      CHECK(check.result.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("xavier bound") {
  CHECK(xavier_bound(3, 3) == doctest::Approx(1.0));
  SeededRng rng(9);
  const Linear<double> lin(10, 20, rng);
  const double bound = std::sqrt(6.0 / 30);
  for (double w : lin.weight.data()) CHECK(std::abs(w) <= bound);
  for (double b : lin.bias.data()) CHECK(b == 0.0);
}
