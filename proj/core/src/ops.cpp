#include "creep/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "creep/error.hpp"
#include "kernels.hpp"

namespace creep {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

std::size_t normalize_axis(std::ptrdiff_t axis, std::size_t rank) {
  const auto r = static_cast<std::ptrdiff_t>(rank);
  const auto a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw Error(ErrorKind::ShapeMismatch, "axis " + std::to_string(axis) + " out of range for rank " +
                                              std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
}

// Splits a shape around `axis` into (outer, len, inner) for strided loops.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// ---------------------------------------------------------------------------
// Broadcasting

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> a_stride;
  std::vector<std::size_t> b_stride;
  enum class Kind { Same, AScalar, BScalar, BSuffix, ASuffix, General } kind = Kind::General;
  std::size_t a_n = 0;
  std::size_t b_n = 0;
};

std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  const std::size_t offset = out.size() - in.size();
  for (std::size_t i = in.size(); i-- > 0;) {
    strides[i + offset] = in[i] == 1 ? 0 : stride;
    stride *= in[i];
  }
  return strides;
}

bool is_suffix(const Shape& small, const Shape& big) {
  // `small` (with leading ones stripped) equals the trailing dims of `big`.
  std::size_t start = 0;
  while (start < small.size() && small[start] == 1) ++start;
  const std::size_t len = small.size() - start;
  if (len > big.size()) return false;
  return std::equal(small.begin() + static_cast<std::ptrdiff_t>(start), small.end(),
                    big.end() - static_cast<std::ptrdiff_t>(len));
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan plan;
  const std::size_t rank = std::max(a.size(), b.size());
  plan.out.assign(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) shape_error(op, a, b);
    plan.out[i] = da == 1 ? db : da;
  }
  plan.a_n = shape_numel(a);
  plan.b_n = shape_numel(b);
  const std::size_t n = shape_numel(plan.out);
  if (plan.a_n == n && plan.b_n == n) {
    plan.kind = BroadcastPlan::Kind::Same;
  } else if (plan.a_n == 1 && plan.b_n == n) {
    plan.kind = BroadcastPlan::Kind::AScalar;
  } else if (plan.b_n == 1 && plan.a_n == n) {
    plan.kind = BroadcastPlan::Kind::BScalar;
  } else if (plan.a_n == n && is_suffix(b, plan.out)) {
    plan.kind = BroadcastPlan::Kind::BSuffix;
  } else if (plan.b_n == n && is_suffix(a, plan.out)) {
    plan.kind = BroadcastPlan::Kind::ASuffix;
  } else {
    plan.kind = BroadcastPlan::Kind::General;
    plan.a_stride = broadcast_strides(a, plan.out);
    plan.b_stride = broadcast_strides(b, plan.out);
  }
  return plan;
}

// Calls fn(out_index, a_index, b_index) for every output element.
template <typename Fn>
void for_each_broadcast(const BroadcastPlan& plan, Fn&& fn) {
  const std::size_t n = shape_numel(plan.out);
  using K = BroadcastPlan::Kind;
  switch (plan.kind) {
    case K::Same:
      for (std::size_t i = 0; i < n; ++i) fn(i, i, i);
      return;
    case K::AScalar:
      for (std::size_t i = 0; i < n; ++i) fn(i, 0, i);
      return;
    case K::BScalar:
      for (std::size_t i = 0; i < n; ++i) fn(i, i, 0);
      return;
    case K::BSuffix:
      for (std::size_t i = 0, j = 0; i < n; ++i) {
        fn(i, i, j);
        if (++j == plan.b_n) j = 0;
      }
      return;
    case K::ASuffix:
      for (std::size_t i = 0, j = 0; i < n; ++i) {
        fn(i, j, i);
        if (++j == plan.a_n) j = 0;
      }
      return;
    case K::General: {
      const std::size_t rank = plan.out.size();
      std::vector<std::size_t> counter(rank, 0);
      std::size_t ia = 0;
      std::size_t ib = 0;
      for (std::size_t i = 0; i < n; ++i) {
        fn(i, ia, ib);
        for (std::size_t d = rank; d-- > 0;) {
          ++counter[d];
          ia += plan.a_stride[d];
          ib += plan.b_stride[d];
          if (counter[d] < plan.out[d]) break;
          ia -= plan.a_stride[d] * counter[d];
          ib -= plan.b_stride[d] * counter[d];
          counter[d] = 0;
        }
      }
      return;
    }
  }
}

// f(a, b) forward; da(a, b, g) and db(a, b, g) are the partial contributions.
template <typename T, typename F, typename DA, typename DB>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, const char* name, F f, DA da, DB db) {
  const auto plan = plan_broadcast(a.shape(), b.shape(), name);
  std::vector<T> out(shape_numel(plan.out));
  const auto& av = a.values();
  const auto& bv = b.values();
  for_each_broadcast(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = f(av[ia], bv[ib]); });
  NodePtr<T> an = a.node_ptr();
  NodePtr<T> bn = b.node_ptr();
  return make_result<T>(plan.out, std::move(out), {a, b}, [an, bn, plan, da, db](const detail::Node<T>& self) {
    const auto& g = self.grad;
    const auto& av = an->value;
    const auto& bv = bn->value;
    if (an->requires_grad) {
      auto& ga = an->ensure_grad();
      for_each_broadcast(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        ga[ia] += da(av[ia], bv[ib], g[i]);
      });
    }
    if (bn->requires_grad) {
      auto& gb = bn->ensure_grad();
      for_each_broadcast(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        gb[ib] += db(av[ia], bv[ib], g[i]);
      });
    }
  });
}

// f(x) forward; d(x, y, g) is the input gradient given output y.
template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& a, F f, D d) {
  const auto& av = a.values();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  NodePtr<T> an = a.node_ptr();
  return make_result<T>(a.shape(), std::move(out), {a}, [an, d](const detail::Node<T>& self) {
    auto& ga = an->ensure_grad();
    const auto& x = an->value;
    const auto& y = self.value;
    const auto& g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += d(x[i], y[i], g[i]);
  });
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T{0}) {
    const T e = std::exp(-x);
    return T{1} / (T{1} + e);
  }
  const T e = std::exp(x);
  return e / (T{1} + e);
}

}  // namespace

Shape broadcast_shapes(const Shape& a, const Shape& b) { return plan_broadcast(a, b, "broadcast").out; }

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, "add", [](T x, T y) { return x + y; }, [](T, T, T g) { return g; },
                [](T, T, T g) { return g; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, "sub", [](T x, T y) { return x - y; }, [](T, T, T g) { return g; },
                [](T, T, T g) { return -g; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y, T g) { return g * y; },
                [](T x, T, T g) { return g * x; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary(a, [factor](T x) { return x * factor; }, [factor](T, T, T g) { return g * factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T offset) {
  return unary(a, [offset](T x) { return x + offset; }, [](T, T, T g) { return g; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  return unary(a, [](T x) { return std::exp(x); }, [](T, T y, T g) { return g * y; });
}

template <typename T>
Tensor<T> expm1(const Tensor<T>& a) {
  return unary(a, [](T x) { return std::expm1(x); }, [](T, T y, T g) { return g * (y + T{1}); });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  return unary(a, [](T x) { return std::log(x); }, [](T x, T, T g) { return g / x; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary(a, [](T x) { return sigmoid_scalar(x); }, [](T, T y, T g) { return g * y * (T{1} - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return unary(a, [](T x) { return std::tanh(x); }, [](T, T y, T g) { return g * (T{1} - y * y); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary(a, [](T x) { return x > T{0} ? x : T{0}; },
               [](T x, T, T g) { return x > T{0} ? g : T{0}; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return unary(a, [](T x) { return x * x; }, [](T x, T, T g) { return T{2} * x * g; });
}

// ---------------------------------------------------------------------------
// Matrix products

namespace {

struct MatmulDims {
  std::size_t batch = 1;
  std::size_t m = 0;
  std::size_t k = 0;
  std::size_t n = 0;
  bool shared_rhs = false;  // rhs is a single 2-D matrix
  Shape out;
};

MatmulDims matmul_dims(const Shape& a, const Shape& b, bool rhs_transposed, const char* op) {
  if (a.size() < 2 || b.size() < 2) shape_error(op, a, b);
  MatmulDims d;
  d.m = a[a.size() - 2];
  d.k = a.back();
  const std::size_t bk = rhs_transposed ? b.back() : b[b.size() - 2];
  d.n = rhs_transposed ? b[b.size() - 2] : b.back();
  if (bk != d.k) shape_error(op, a, b);
  for (std::size_t i = 0; i + 2 < a.size(); ++i) d.batch *= a[i];
  if (b.size() == 2) {
    d.shared_rhs = true;
  } else {
    if (b.size() != a.size() || !std::equal(a.begin(), a.end() - 2, b.begin())) shape_error(op, a, b);
  }
  d.out.assign(a.begin(), a.end() - 2);
  d.out.push_back(d.m);
  d.out.push_back(d.n);
  return d;
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const auto d = matmul_dims(a.shape(), b.shape(), false, "matmul");
  std::vector<T> out(d.batch * d.m * d.n);
  const T* av = a.values().data();
  const T* bv = b.values().data();
  if (d.shared_rhs) {
    kernels::gemm_nn(d.batch * d.m, d.n, d.k, av, d.k, bv, d.n, out.data(), d.n, false);
  } else {
    for (std::size_t s = 0; s < d.batch; ++s) {
      kernels::gemm_nn(d.m, d.n, d.k, av + s * d.m * d.k, d.k, bv + s * d.k * d.n, d.n,
                       out.data() + s * d.m * d.n, d.n, false);
    }
  }
  NodePtr<T> an = a.node_ptr();
  NodePtr<T> bn = b.node_ptr();
  return make_result<T>(d.out, std::move(out), {a, b}, [an, bn, d](const detail::Node<T>& self) {
    const T* g = self.grad.data();
    std::vector<T> scratch;
    if (an->requires_grad) {
      T* ga = an->ensure_grad().data();
      // dA = dC * B^T
      if (d.shared_rhs) {
        kernels::gemm_nt(d.batch * d.m, d.k, d.n, g, d.n, bn->value.data(), d.n, ga, d.k, true, scratch);
      } else {
        for (std::size_t s = 0; s < d.batch; ++s) {
          kernels::gemm_nt(d.m, d.k, d.n, g + s * d.m * d.n, d.n, bn->value.data() + s * d.k * d.n, d.n,
                           ga + s * d.m * d.k, d.k, true, scratch);
        }
      }
    }
    if (bn->requires_grad) {
      T* gb = bn->ensure_grad().data();
      // dB = A^T * dC
      if (d.shared_rhs) {
        kernels::gemm_tn(d.k, d.n, d.batch * d.m, an->value.data(), d.k, g, d.n, gb, d.n, true);
      } else {
        for (std::size_t s = 0; s < d.batch; ++s) {
          kernels::gemm_tn(d.k, d.n, d.m, an->value.data() + s * d.m * d.k, d.k, g + s * d.m * d.n, d.n,
                           gb + s * d.k * d.n, d.n, true);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  const auto d = matmul_dims(a.shape(), b.shape(), true, "matmul_nt");
  std::vector<T> out(d.batch * d.m * d.n);
  std::vector<T> scratch;
  const T* av = a.values().data();
  const T* bv = b.values().data();
  if (d.shared_rhs) {
    kernels::gemm_nt(d.batch * d.m, d.n, d.k, av, d.k, bv, d.k, out.data(), d.n, false, scratch);
  } else {
    for (std::size_t s = 0; s < d.batch; ++s) {
      kernels::gemm_nt(d.m, d.n, d.k, av + s * d.m * d.k, d.k, bv + s * d.n * d.k, d.k,
                       out.data() + s * d.m * d.n, d.n, false, scratch);
    }
  }
  NodePtr<T> an = a.node_ptr();
  NodePtr<T> bn = b.node_ptr();
  return make_result<T>(d.out, std::move(out), {a, b}, [an, bn, d](const detail::Node<T>& self) {
    const T* g = self.grad.data();
    if (an->requires_grad) {
      T* ga = an->ensure_grad().data();
      // dA = dC * B
      if (d.shared_rhs) {
        kernels::gemm_nn(d.batch * d.m, d.k, d.n, g, d.n, bn->value.data(), d.k, ga, d.k, true);
      } else {
        for (std::size_t s = 0; s < d.batch; ++s) {
          kernels::gemm_nn(d.m, d.k, d.n, g + s * d.m * d.n, d.n, bn->value.data() + s * d.n * d.k, d.k,
                           ga + s * d.m * d.k, d.k, true);
        }
      }
    }
    if (bn->requires_grad) {
      T* gb = bn->ensure_grad().data();
      // dB = dC^T * A
      if (d.shared_rhs) {
        kernels::gemm_tn(d.n, d.k, d.batch * d.m, g, d.n, an->value.data(), d.k, gb, d.k, true);
      } else {
        for (std::size_t s = 0; s < d.batch; ++s) {
          kernels::gemm_tn(d.n, d.k, d.m, g + s * d.m * d.n, d.n, an->value.data() + s * d.m * d.k, d.k,
                           gb + s * d.n * d.k, d.k, true);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Layout

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) shape_error("reshape", a.shape(), shape);
  NodePtr<T> an = a.node_ptr();
  return make_result<T>(std::move(shape), a.values(), {a}, [an](const detail::Node<T>& self) {
    auto& ga = an->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& order) {
  const Shape& in = a.shape();
  const std::size_t rank = in.size();
  if (order.size() != rank) shape_error("permute", in, Shape(order.begin(), order.end()));
  std::vector<bool> seen(rank, false);
  for (const auto o : order) {
    if (o >= rank || seen[o]) shape_error("permute", in, Shape(order.begin(), order.end()));
    seen[o] = true;
  }
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
  Shape out_shape(rank);
  std::vector<std::size_t> src_stride(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in[order[i]];
    src_stride[i] = in_stride[order[i]];
  }
  // map[i] = source offset of output element i
  const std::size_t n = a.numel();
  std::vector<std::size_t> map(n);
  {
    std::vector<std::size_t> counter(rank, 0);
    std::size_t src = 0;
    for (std::size_t i = 0; i < n; ++i) {
      map[i] = src;
      for (std::size_t d = rank; d-- > 0;) {
        ++counter[d];
        src += src_stride[d];
        if (counter[d] < out_shape[d]) break;
        src -= src_stride[d] * counter[d];
        counter[d] = 0;
      }
    }
  }
  std::vector<T> out(n);
  const auto& av = a.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[map[i]];
  NodePtr<T> an = a.node_ptr();
  return make_result<T>(std::move(out_shape), std::move(out), {a},
                        [an, map = std::move(map)](const detail::Node<T>& self) {
                          auto& ga = an->ensure_grad();
                          for (std::size_t i = 0; i < map.size(); ++i) ga[map[i]] += self.grad[i];
                        });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a, std::ptrdiff_t axis0, std::ptrdiff_t axis1) {
  std::vector<std::size_t> order(a.rank());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::swap(order[normalize_axis(axis0, a.rank())], order[normalize_axis(axis1, a.rank())]);
  return permute(a, order);
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::ptrdiff_t axis) {
  if (parts.empty()) throw Error(ErrorKind::EmptyInput, "concat of zero tensors");
  const Shape& first = parts.front().shape();
  const std::size_t ax = normalize_axis(axis, first.size());
  Shape out_shape = first;
  out_shape[ax] = 0;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) shape_error("concat", first, s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != ax && s[i] != first[i]) shape_error("concat", first, s);
    }
    out_shape[ax] += s[ax];
    lens.push_back(s[ax]);
  }
  const auto split = split_at(out_shape, ax);
  std::vector<T> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& pv = parts[p].values();
    const std::size_t chunk = lens[p] * split.inner;
    for (std::size_t o = 0; o < split.outer; ++o) {
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>(o * split.len * split.inner + offset));
    }
    offset += chunk;
  }
  std::vector<NodePtr<T>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node_ptr());
  return make_result<T>(out_shape, std::move(out), parts, [nodes, lens, split](const detail::Node<T>& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < nodes.size(); ++p) {
      const std::size_t chunk = lens[p] * split.inner;
      if (nodes[p]->requires_grad) {
        auto& gp = nodes[p]->ensure_grad();
        for (std::size_t o = 0; o < split.outer; ++o) {
          const T* src = self.grad.data() + o * split.len * split.inner + offset;
          T* dst = gp.data() + o * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
      offset += chunk;
    }
  });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::ptrdiff_t axis, std::size_t start, std::size_t length) {
  const std::size_t ax = normalize_axis(axis, a.rank());
  const auto split = split_at(a.shape(), ax);
  if (start + length > split.len) {
    throw Error(ErrorKind::ShapeMismatch, "slice [" + std::to_string(start) + ", " +
                                              std::to_string(start + length) + ") out of range for " +
                                              shape_str(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[ax] = length;
  std::vector<T> out(shape_numel(out_shape));
  const auto& av = a.values();
  const std::size_t chunk = length * split.inner;
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>((o * split.len + start) * split.inner), chunk,
                out.begin() + static_cast<std::ptrdiff_t>(o * chunk));
  }
  NodePtr<T> an = a.node_ptr();
  return make_result<T>(std::move(out_shape), std::move(out), {a},
                        [an, split, start, chunk](const detail::Node<T>& self) {
                          auto& ga = an->ensure_grad();
                          for (std::size_t o = 0; o < split.outer; ++o) {
                            T* dst = ga.data() + (o * split.len + start) * split.inner;
                            const T* src = self.grad.data() + o * chunk;
                            for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                          }
                        });
}

template <typename T>
Tensor<T> flip(const Tensor<T>& a, std::ptrdiff_t axis) {
  const std::size_t ax = normalize_axis(axis, a.rank());
  const auto split = split_at(a.shape(), ax);
  std::vector<std::size_t> map(a.numel());
  for (std::size_t o = 0; o < split.outer; ++o) {
    for (std::size_t l = 0; l < split.len; ++l) {
      for (std::size_t i = 0; i < split.inner; ++i) {
        map[(o * split.len + l) * split.inner + i] = (o * split.len + (split.len - 1 - l)) * split.inner + i;
      }
    }
  }
  std::vector<T> out(a.numel());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[map[i]];
  NodePtr<T> an = a.node_ptr();
  return make_result<T>(a.shape(), std::move(out), {a}, [an, map = std::move(map)](const detail::Node<T>& self) {
    auto& ga = an->ensure_grad();
    for (std::size_t i = 0; i < map.size(); ++i) ga[map[i]] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total{0};
  for (const T v : a.values()) total += v;
  NodePtr<T> an = a.node_ptr();
  return make_result<T>(Shape{}, std::vector<T>{total}, {a}, [an](const detail::Node<T>& self) {
    auto& ga = an->ensure_grad();
    const T g = self.grad[0];
    for (auto& x : ga) x += g;
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a, std::ptrdiff_t axis) {
  const std::size_t ax = normalize_axis(axis, a.rank());
  const auto split = split_at(a.shape(), ax);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  std::vector<T> out(split.outer * split.inner, T{0});
  const auto& av = a.values();
  for (std::size_t o = 0; o < split.outer; ++o) {
    for (std::size_t l = 0; l < split.len; ++l) {
      const T* src = av.data() + (o * split.len + l) * split.inner;
      T* dst = out.data() + o * split.inner;
      for (std::size_t i = 0; i < split.inner; ++i) dst[i] += src[i];
    }
  }
  NodePtr<T> an = a.node_ptr();
  return make_result<T>(std::move(out_shape), std::move(out), {a}, [an, split](const detail::Node<T>& self) {
    auto& ga = an->ensure_grad();
    for (std::size_t o = 0; o < split.outer; ++o) {
      const T* src = self.grad.data() + o * split.inner;
      for (std::size_t l = 0; l < split.len; ++l) {
        T* dst = ga.data() + (o * split.len + l) * split.inner;
        for (std::size_t i = 0; i < split.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.numel() == 0) throw Error(ErrorKind::EmptyInput, "mean of an empty tensor");
  return scale(sum(a), T{1} / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a, std::ptrdiff_t axis) {
  const std::size_t len = a.dim(axis);
  if (len == 0) throw Error(ErrorKind::EmptyInput, "mean over an empty axis");
  return scale(sum(a, axis), T{1} / static_cast<T>(len));
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, std::ptrdiff_t axis) {
  const std::size_t ax = normalize_axis(axis, a.rank());
  const auto split = split_at(a.shape(), ax);
  const auto& av = a.values();
  std::vector<T> out(av.size());
  for (std::size_t o = 0; o < split.outer; ++o) {
    for (std::size_t i = 0; i < split.inner; ++i) {
      const std::size_t base = o * split.len * split.inner + i;
      T max_v = av[base];
      for (std::size_t l = 1; l < split.len; ++l) max_v = std::max(max_v, av[base + l * split.inner]);
      T total{0};
      for (std::size_t l = 0; l < split.len; ++l) {
        const T e = std::exp(av[base + l * split.inner] - max_v);
        out[base + l * split.inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < split.len; ++l) out[base + l * split.inner] /= total;
    }
  }
  NodePtr<T> an = a.node_ptr();
  return make_result<T>(a.shape(), std::move(out), {a}, [an, split](const detail::Node<T>& self) {
    auto& ga = an->ensure_grad();
    const auto& y = self.value;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < split.outer; ++o) {
      for (std::size_t i = 0; i < split.inner; ++i) {
        const std::size_t base = o * split.len * split.inner + i;
        T dot{0};
        for (std::size_t l = 0; l < split.len; ++l) dot += g[base + l * split.inner] * y[base + l * split.inner];
        for (std::size_t l = 0; l < split.len; ++l) {
          const std::size_t idx = base + l * split.inner;
          ga[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  if (x.rank() == 0) shape_error("layer_norm", x.shape(), gamma.shape());
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d}) shape_error("layer_norm", x.shape(), gamma.shape());
  if (beta.shape() != Shape{d}) shape_error("layer_norm", x.shape(), beta.shape());
  const std::size_t rows = x.numel() / d;
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  std::vector<T> out(xv.size());
  std::vector<T> xhat(xv.size());
  std::vector<T> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * d;
    T mu{0};
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<T>(d);
    T var{0};
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(d);
    const T inv = T{1} / std::sqrt(var + eps);
    rstd[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (row[j] - mu) * inv;
      xhat[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  NodePtr<T> xn = x.node_ptr();
  NodePtr<T> gn = gamma.node_ptr();
  NodePtr<T> bn = beta.node_ptr();
  return make_result<T>(
      x.shape(), std::move(out), {x, gamma, beta},
      [xn, gn, bn, d, rows, xhat = std::move(xhat), rstd = std::move(rstd)](const detail::Node<T>& self) {
        const auto& g = self.grad;
        if (gn->requires_grad) {
          auto& gg = gn->ensure_grad();
          for (std::size_t i = 0; i < rows * d; ++i) gg[i % d] += g[i] * xhat[i];
        }
        if (bn->requires_grad) {
          auto& gb = bn->ensure_grad();
          for (std::size_t i = 0; i < rows * d; ++i) gb[i % d] += g[i];
        }
        if (xn->requires_grad) {
          auto& gx = xn->ensure_grad();
          const auto& gamma_v = gn->value;
          const T inv_d = T{1} / static_cast<T>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            T sum_dh{0};
            T sum_dh_h{0};
            for (std::size_t j = 0; j < d; ++j) {
              const T dh = g[r * d + j] * gamma_v[j];
              sum_dh += dh;
              sum_dh_h += dh * xhat[r * d + j];
            }
            for (std::size_t j = 0; j < d; ++j) {
              const T dh = g[r * d + j] * gamma_v[j];
              gx[r * d + j] += rstd[r] * (dh - inv_d * sum_dh - xhat[r * d + j] * inv_d * sum_dh_h);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, SeededRng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw Error(ErrorKind::InvalidProbability, "dropout probability must be in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() < p ? T{0} : keep_scale;
  const auto& xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  NodePtr<T> xn = x.node_ptr();
  return make_result<T>(x.shape(), std::move(out), {x}, [xn, mask = std::move(mask)](const detail::Node<T>& self) {
    auto& gx = xn->ensure_grad();
    for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += self.grad[i] * mask[i];
  });
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) shape_error("mse_loss", pred.shape(), target.shape());
  if (pred.numel() == 0) throw Error(ErrorKind::EmptyInput, "mse_loss of empty tensors");
  const auto& pv = pred.values();
  const auto& tv = target.values();
  T total{0};
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const T diff = pv[i] - tv[i];
    total += diff * diff;
  }
  const T n = static_cast<T>(pv.size());
  NodePtr<T> pn = pred.node_ptr();
  NodePtr<T> tn = target.node_ptr();
  return make_result<T>(Shape{}, std::vector<T>{total / n}, {pred, target}, [pn, tn, n](const detail::Node<T>& self) {
    const T g = self.grad[0] * T{2} / n;
    const auto& pv = pn->value;
    const auto& tv = tn->value;
    if (pn->requires_grad) {
      auto& gp = pn->ensure_grad();
      for (std::size_t i = 0; i < pv.size(); ++i) gp[i] += g * (pv[i] - tv[i]);
    }
    if (tn->requires_grad) {
      auto& gt = tn->ensure_grad();
      for (std::size_t i = 0; i < pv.size(); ++i) gt[i] -= g * (pv[i] - tv[i]);
    }
  });
}

// ---------------------------------------------------------------------------
// Recurrent sequence

template <typename T>
Tensor<T> lstm_sequence(const Tensor<T>& x, const Tensor<T>& w_ih, const Tensor<T>& w_hh,
                        const Tensor<T>& b_ih, const Tensor<T>& b_hh, bool reverse) {
  if (x.rank() != 3) shape_error("lstm_sequence", x.shape(), w_ih.shape());
  const std::size_t batch = x.dim(0);
  const std::size_t steps = x.dim(1);
  const std::size_t in = x.dim(2);
  if (w_hh.rank() != 2 || w_hh.dim(1) != 4 * w_hh.dim(0)) shape_error("lstm_sequence", w_hh.shape(), w_hh.shape());
  const std::size_t hidden = w_hh.dim(0);
  const std::size_t g4 = 4 * hidden;
  if (w_ih.shape() != Shape{in, g4}) shape_error("lstm_sequence", x.shape(), w_ih.shape());
  if (b_ih.shape() != Shape{g4}) shape_error("lstm_sequence", b_ih.shape(), Shape{g4});
  if (b_hh.shape() != Shape{g4}) shape_error("lstm_sequence", b_hh.shape(), Shape{g4});

  const std::size_t rows = batch * steps;
  // gates[(b*L + t)*4H + ...] holds activated [i, f, g, o]
  std::vector<T> gates(rows * g4);
  kernels::gemm_nn(rows, g4, in, x.values().data(), in, w_ih.values().data(), g4, gates.data(), g4, false);
  const auto& bi = b_ih.values();
  const auto& bh = b_hh.values();
  for (std::size_t r = 0; r < rows; ++r) {
    T* z = gates.data() + r * g4;
    for (std::size_t j = 0; j < g4; ++j) z[j] += bi[j] + bh[j];
  }

  std::vector<T> cell(rows * hidden);
  std::vector<T> out(rows * hidden);
  std::vector<T> h_prev(batch * hidden, T{0});
  std::vector<T> c_prev(batch * hidden, T{0});
  std::vector<T> rec(batch * g4);
  const T* whh = w_hh.values().data();
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    kernels::gemm_nn(batch, g4, hidden, h_prev.data(), hidden, whh, g4, rec.data(), g4, false);
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t r = b * steps + t;
      T* z = gates.data() + r * g4;
      const T* zr = rec.data() + b * g4;
      for (std::size_t j = 0; j < hidden; ++j) {
        const T ig = sigmoid_scalar(z[j] + zr[j]);
        const T fg = sigmoid_scalar(z[hidden + j] + zr[hidden + j]);
        const T gg = std::tanh(z[2 * hidden + j] + zr[2 * hidden + j]);
        const T og = sigmoid_scalar(z[3 * hidden + j] + zr[3 * hidden + j]);
        z[j] = ig;
        z[hidden + j] = fg;
        z[2 * hidden + j] = gg;
        z[3 * hidden + j] = og;
        const T c = fg * c_prev[b * hidden + j] + ig * gg;
        const T h = og * std::tanh(c);
        cell[r * hidden + j] = c;
        out[r * hidden + j] = h;
        c_prev[b * hidden + j] = c;
        h_prev[b * hidden + j] = h;
      }
    }
  }

  NodePtr<T> xn = x.node_ptr();
  NodePtr<T> wihn = w_ih.node_ptr();
  NodePtr<T> whhn = w_hh.node_ptr();
  NodePtr<T> bin = b_ih.node_ptr();
  NodePtr<T> bhn = b_hh.node_ptr();
  return make_result<T>(
      Shape{batch, steps, hidden}, std::move(out), {x, w_ih, w_hh, b_ih, b_hh},
      [=, gates = std::move(gates), cell = std::move(cell)](const detail::Node<T>& self) {
        const auto& dout = self.grad;
        const auto& h_all = self.value;
        std::vector<T> dz(rows * g4, T{0});
        std::vector<T> dh_next(batch * hidden, T{0});
        std::vector<T> dc_next(batch * hidden, T{0});
        std::vector<T> dz_step(batch * g4);
        std::vector<T> h_prev_step(batch * hidden);
        std::vector<T> scratch;
        const bool need_whh = whhn->requires_grad;
        T* gwhh = need_whh ? whhn->ensure_grad().data() : nullptr;
        for (std::size_t s = steps; s-- > 0;) {
          const std::size_t t = reverse ? steps - 1 - s : s;
          const bool has_prev = s > 0;
          const std::size_t tp = reverse ? t + 1 : t - 1;  // only read when has_prev
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t r = b * steps + t;
            const T* gt = gates.data() + r * g4;
            T* dzr = dz.data() + r * g4;
            for (std::size_t j = 0; j < hidden; ++j) {
              const T ig = gt[j];
              const T fg = gt[hidden + j];
              const T gg = gt[2 * hidden + j];
              const T og = gt[3 * hidden + j];
              const T c = cell[r * hidden + j];
              const T cp = has_prev ? cell[(b * steps + tp) * hidden + j] : T{0};
              const T tc = std::tanh(c);
              const T dh = dout[r * hidden + j] + dh_next[b * hidden + j];
              const T d_o = dh * tc;
              const T dc = dh * og * (T{1} - tc * tc) + dc_next[b * hidden + j];
              dzr[j] = dc * gg * ig * (T{1} - ig);
              dzr[hidden + j] = dc * cp * fg * (T{1} - fg);
              dzr[2 * hidden + j] = dc * ig * (T{1} - gg * gg);
              dzr[3 * hidden + j] = d_o * og * (T{1} - og);
              dc_next[b * hidden + j] = dc * fg;
              h_prev_step[b * hidden + j] = has_prev ? h_all[(b * steps + tp) * hidden + j] : T{0};
            }
            std::copy_n(dzr, g4, dz_step.data() + b * g4);
          }
          // dh_prev = dz * W_hh^T
          kernels::gemm_nt(batch, hidden, g4, dz_step.data(), g4, whhn->value.data(), g4, dh_next.data(), hidden,
                           false, scratch);
          if (need_whh && has_prev) {
            kernels::gemm_tn(hidden, g4, batch, h_prev_step.data(), hidden, dz_step.data(), g4, gwhh, g4, true);
          }
        }
        if (wihn->requires_grad) {
          kernels::gemm_tn(in, g4, rows, xn->value.data(), in, dz.data(), g4, wihn->ensure_grad().data(), g4, true);
        }
        if (bin->requires_grad || bhn->requires_grad) {
          std::vector<T> db(g4, T{0});
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < g4; ++j) db[j] += dz[r * g4 + j];
          }
          if (bin->requires_grad) {
            auto& g = bin->ensure_grad();
            for (std::size_t j = 0; j < g4; ++j) g[j] += db[j];
          }
          if (bhn->requires_grad) {
            auto& g = bhn->ensure_grad();
            for (std::size_t j = 0; j < g4; ++j) g[j] += db[j];
          }
        }
        if (xn->requires_grad) {
          kernels::gemm_nt(rows, in, g4, dz.data(), g4, wihn->value.data(), g4, xn->ensure_grad().data(), in, true,
                           scratch);
        }
      });
}

// ---------------------------------------------------------------------------
// Attention

namespace {

struct AttentionDims {
  std::size_t batch = 0;
  std::size_t lq = 0;
  std::size_t lk = 0;
  std::size_t d = 0;
  std::size_t heads = 0;
  std::size_t dh = 0;
};

template <typename T>
AttentionDims attention_dims(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>* v, std::size_t heads) {
  if (q.rank() != 3 || k.rank() != 3) shape_error("attention", q.shape(), k.shape());
  AttentionDims dims{q.dim(0), q.dim(1), k.dim(1), q.dim(2), heads, 0};
  if (k.dim(0) != dims.batch || k.dim(2) != dims.d) shape_error("attention", q.shape(), k.shape());
  if (v && v->shape() != k.shape()) shape_error("attention", k.shape(), v->shape());
  if (heads == 0 || dims.d % heads != 0) {
    throw Error(ErrorKind::HeadDivisibility,
                "embed dim " + std::to_string(dims.d) + " not divisible by " + std::to_string(heads) + " heads");
  }
  dims.dh = dims.d / heads;
  return dims;
}

// Copies channels [h*dh, (h+1)*dh) of batch b into a contiguous (L x dh) block.
template <typename T>
void gather_head(const std::vector<T>& src, std::size_t b, std::size_t h, std::size_t len, const AttentionDims& dm,
                 T* dst) {
  for (std::size_t l = 0; l < len; ++l) {
    const T* row = src.data() + (b * len + l) * dm.d + h * dm.dh;
    std::copy_n(row, dm.dh, dst + l * dm.dh);
  }
}

template <typename T>
void scatter_add_head(const T* src, std::size_t b, std::size_t h, std::size_t len, const AttentionDims& dm,
                      std::vector<T>& dst) {
  for (std::size_t l = 0; l < len; ++l) {
    T* row = dst.data() + (b * len + l) * dm.d + h * dm.dh;
    for (std::size_t j = 0; j < dm.dh; ++j) row[j] += src[l * dm.dh + j];
  }
}

// Row softmax of `rows` x `cols` scores in place.
template <typename T>
void softmax_rows(T* s, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = s + r * cols;
    T max_v = row[0];
    for (std::size_t j = 1; j < cols; ++j) max_v = std::max(max_v, row[j]);
    T total{0};
    for (std::size_t j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - max_v);
      total += row[j];
    }
    const T inv = T{1} / total;
    for (std::size_t j = 0; j < cols; ++j) row[j] *= inv;
  }
}

}  // namespace

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads,
                    std::size_t block_rows) {
  const auto dm = attention_dims(q, k, &v, heads);
  if (block_rows == 0) block_rows = dm.lq;
  const T scale_f = T{1} / std::sqrt(static_cast<T>(dm.dh));
  std::vector<T> out(dm.batch * dm.lq * dm.d, T{0});
  std::vector<T> qh(dm.lq * dm.dh);
  std::vector<T> kt(dm.dh * dm.lk);
  std::vector<T> vh(dm.lk * dm.dh);
  std::vector<T> kh(dm.lk * dm.dh);
  std::vector<T> scores(std::min(block_rows, dm.lq) * dm.lk);
  std::vector<T> oh(dm.lq * dm.dh);
  for (std::size_t b = 0; b < dm.batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      gather_head(q.values(), b, h, dm.lq, dm, qh.data());
      gather_head(k.values(), b, h, dm.lk, dm, kh.data());
      gather_head(v.values(), b, h, dm.lk, dm, vh.data());
      kernels::transpose(dm.lk, dm.dh, kh.data(), dm.dh, kt.data(), dm.lk);
      for (std::size_t r0 = 0; r0 < dm.lq; r0 += block_rows) {
        const std::size_t rows = std::min(block_rows, dm.lq - r0);
        kernels::gemm_nn(rows, dm.lk, dm.dh, qh.data() + r0 * dm.dh, dm.dh, kt.data(), dm.lk, scores.data(), dm.lk,
                         false);
        for (std::size_t i = 0; i < rows * dm.lk; ++i) scores[i] *= scale_f;
        softmax_rows(scores.data(), rows, dm.lk);
        kernels::gemm_nn(rows, dm.dh, dm.lk, scores.data(), dm.lk, vh.data(), dm.dh, oh.data() + r0 * dm.dh, dm.dh,
                         false);
      }
      scatter_add_head(oh.data(), b, h, dm.lq, dm, out);
    }
  }

  NodePtr<T> qn = q.node_ptr();
  NodePtr<T> kn = k.node_ptr();
  NodePtr<T> vn = v.node_ptr();
  return make_result<T>(Shape{dm.batch, dm.lq, dm.d}, std::move(out), {q, k, v},
                        [qn, kn, vn, dm, block_rows, scale_f](const detail::Node<T>& self) {
    std::vector<T> qh(dm.lq * dm.dh), kh(dm.lk * dm.dh), kt(dm.dh * dm.lk), vh(dm.lk * dm.dh);
    std::vector<T> doh(dm.lq * dm.dh);
    std::vector<T> dqh(dm.lq * dm.dh), dkh(dm.lk * dm.dh), dvh(dm.lk * dm.dh);
    const std::size_t max_rows = std::min(block_rows, dm.lq);
    std::vector<T> p(max_rows * dm.lk), dp(max_rows * dm.lk);
    std::vector<T> scratch;
    for (std::size_t b = 0; b < dm.batch; ++b) {
      for (std::size_t h = 0; h < dm.heads; ++h) {
        gather_head(qn->value, b, h, dm.lq, dm, qh.data());
        gather_head(kn->value, b, h, dm.lk, dm, kh.data());
        gather_head(vn->value, b, h, dm.lk, dm, vh.data());
        gather_head(self.grad, b, h, dm.lq, dm, doh.data());
        kernels::transpose(dm.lk, dm.dh, kh.data(), dm.dh, kt.data(), dm.lk);
        std::fill(dkh.begin(), dkh.end(), T{0});
        std::fill(dvh.begin(), dvh.end(), T{0});
        for (std::size_t r0 = 0; r0 < dm.lq; r0 += block_rows) {
          const std::size_t rows = std::min(block_rows, dm.lq - r0);
          kernels::gemm_nn(rows, dm.lk, dm.dh, qh.data() + r0 * dm.dh, dm.dh, kt.data(), dm.lk, p.data(), dm.lk,
                           false);
          for (std::size_t i = 0; i < rows * dm.lk; ++i) p[i] *= scale_f;
          softmax_rows(p.data(), rows, dm.lk);
          // dV += P^T dO
          kernels::gemm_tn(dm.lk, dm.dh, rows, p.data(), dm.lk, doh.data() + r0 * dm.dh, dm.dh, dvh.data(), dm.dh,
                           true);
          // dP = dO V^T
          kernels::gemm_nt(rows, dm.lk, dm.dh, doh.data() + r0 * dm.dh, dm.dh, vh.data(), dm.dh, dp.data(), dm.lk,
                           false, scratch);
          // dS = P * (dP - rowsum(dP * P)) * scale
          for (std::size_t r = 0; r < rows; ++r) {
            T* pr = p.data() + r * dm.lk;
            T* dpr = dp.data() + r * dm.lk;
            T dot{0};
            for (std::size_t j = 0; j < dm.lk; ++j) dot += dpr[j] * pr[j];
            for (std::size_t j = 0; j < dm.lk; ++j) dpr[j] = pr[j] * (dpr[j] - dot) * scale_f;
          }
          // dQ = dS K ; dK += dS^T Q
          kernels::gemm_nn(rows, dm.dh, dm.lk, dp.data(), dm.lk, kh.data(), dm.dh, dqh.data() + r0 * dm.dh, dm.dh,
                           false);
          kernels::gemm_tn(dm.lk, dm.dh, rows, dp.data(), dm.lk, qh.data() + r0 * dm.dh, dm.dh, dkh.data(), dm.dh,
                           true);
        }
        if (qn->requires_grad) scatter_add_head(dqh.data(), b, h, dm.lq, dm, qn->ensure_grad());
        if (kn->requires_grad) scatter_add_head(dkh.data(), b, h, dm.lk, dm, kn->ensure_grad());
        if (vn->requires_grad) scatter_add_head(dvh.data(), b, h, dm.lk, dm, vn->ensure_grad());
      }
    }
  });
}

template <typename T>
Tensor<T> attention_weights(const Tensor<T>& q, const Tensor<T>& k, std::size_t heads) {
  const auto dm = attention_dims<T>(q, k, nullptr, heads);
  const T scale_f = T{1} / std::sqrt(static_cast<T>(dm.dh));
  std::vector<T> out(dm.batch * heads * dm.lq * dm.lk);
  std::vector<T> qh(dm.lq * dm.dh), kh(dm.lk * dm.dh), kt(dm.dh * dm.lk);
  for (std::size_t b = 0; b < dm.batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      gather_head(q.values(), b, h, dm.lq, dm, qh.data());
      gather_head(k.values(), b, h, dm.lk, dm, kh.data());
      kernels::transpose(dm.lk, dm.dh, kh.data(), dm.dh, kt.data(), dm.lk);
      T* s = out.data() + (b * heads + h) * dm.lq * dm.lk;
      kernels::gemm_nn(dm.lq, dm.lk, dm.dh, qh.data(), dm.dh, kt.data(), dm.lk, s, dm.lk, false);
      for (std::size_t i = 0; i < dm.lq * dm.lk; ++i) s[i] *= scale_f;
      softmax_rows(s, dm.lq, dm.lk);
    }
  }
  return Tensor<T>(Shape{dm.batch, heads, dm.lq, dm.lk}, std::move(out));
}

template <typename T>
Tensor<T> uniform(const Shape& shape, double lo, double hi, SeededRng& rng) {
  if (!(hi > lo)) throw Error(ErrorKind::InvalidArgument, "uniform range must satisfy lo < hi");
  std::vector<T> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<T>(rng.uniform(lo, hi));
  return Tensor<T>(shape, std::move(values));
}

template <typename T>
Tensor<T> standard_normal(const Shape& shape, SeededRng& rng) {
  std::vector<T> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<T>(rng.standard_normal());
  return Tensor<T>(shape, std::move(values));
}

template <typename T>
bool all_finite(const Tensor<T>& a) {
  return std::all_of(a.values().begin(), a.values().end(), [](T v) { return std::isfinite(v); });
}

#define CREEP_INSTANTIATE_OPS(T)                                                                              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                 \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                                 \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                                 \
  template Tensor<T> scale(const Tensor<T>&, T);                                                              \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                         \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                        \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                              \
  template Tensor<T> transpose(const Tensor<T>&, std::ptrdiff_t, std::ptrdiff_t);                             \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::ptrdiff_t);                                   \
  template Tensor<T> slice(const Tensor<T>&, std::ptrdiff_t, std::size_t, std::size_t);                       \
  template Tensor<T> flip(const Tensor<T>&, std::ptrdiff_t);                                                  \
  template Tensor<T> sum(const Tensor<T>&);                                                                   \
  template Tensor<T> sum(const Tensor<T>&, std::ptrdiff_t);                                                   \
  template Tensor<T> mean(const Tensor<T>&);                                                                  \
  template Tensor<T> mean(const Tensor<T>&, std::ptrdiff_t);                                                  \
  template Tensor<T> exp(const Tensor<T>&);                                                                   \
  template Tensor<T> expm1(const Tensor<T>&);                                                                 \
  template Tensor<T> log(const Tensor<T>&);                                                                   \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                               \
  template Tensor<T> tanh(const Tensor<T>&);                                                                  \
  template Tensor<T> relu(const Tensor<T>&);                                                                  \
  template Tensor<T> square(const Tensor<T>&);                                                                \
  template Tensor<T> softmax(const Tensor<T>&, std::ptrdiff_t);                                               \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                     \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, SeededRng&);                                     \
  template Tensor<T> mse_loss(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> lstm_sequence(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                   const Tensor<T>&, bool);                                                   \
  template Tensor<T> attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t); \
  template Tensor<T> attention_weights(const Tensor<T>&, const Tensor<T>&, std::size_t);                      \
  template Tensor<T> uniform(const Shape&, double, double, SeededRng&);                                       \
  template Tensor<T> standard_normal(const Shape&, SeededRng&);                                               \
  template bool all_finite(const Tensor<T>&);

CREEP_INSTANTIATE_OPS(float)
CREEP_INSTANTIATE_OPS(double)

#undef CREEP_INSTANTIATE_OPS

}  // namespace creep
