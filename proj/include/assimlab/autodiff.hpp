#pragma once

// Tape-based reverse-mode differentiation over dense f64 tensors.
//
// A Graph records nodes in creation order, which is a topological order by
// construction. backward() walks the tape once in reverse and every node
// pushes its contribution into its inputs' gradient buffers, so the
// accumulation order is fixed and replays are bit-identical.

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "assimlab/tensor.hpp"

namespace assimlab::ad {

using NodeId = std::uint32_t;

class Graph;
class BackwardContext;

using BackwardFn = std::function<void(BackwardContext&)>;

struct Node {
  const char* kind = "";
  std::vector<NodeId> inputs;
  Tensor value;
  BackwardFn backward;
  bool requires_grad = false;
};

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* g, NodeId id) : graph_(g), id_(id) {}

  Graph& graph() const { return *graph_; }
  NodeId id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }

 private:
  Graph* graph_ = nullptr;
  NodeId id_ = 0;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value) { return push("constant", {}, std::move(value), {}, false); }
  Var parameter(Tensor value) { return push("parameter", {}, std::move(value), {}, true); }

  /// Append an operation node. `backward` is dropped when no input needs a gradient.
  Var record(const char* kind, std::span<const Var> inputs, Tensor value, BackwardFn backward) {
    std::vector<NodeId> ids;
    ids.reserve(inputs.size());
    bool needs = false;
    for (const Var& v : inputs) {
      if (&v.graph() != this) throw ContractError(std::string(kind) + ": inputs from another graph");
      ids.push_back(v.id());
      needs = needs || nodes_[v.id()].requires_grad;
    }
    if (!value.all_finite()) throw DifferentiationError(kind, "non-finite primal value");
    return push(kind, std::move(ids), std::move(value), needs ? std::move(backward) : BackwardFn{},
                needs);
  }
  Var record(const char* kind, std::initializer_list<Var> inputs, Tensor value, BackwardFn backward) {
    return record(kind, std::span<const Var>(inputs.begin(), inputs.size()), std::move(value),
                  std::move(backward));
  }

  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradients of scalar `loss` with respect to each of `wrt` (zeros where unused).
  std::vector<Tensor> backward(Var loss, std::span<const Var> wrt);

 private:
  friend class BackwardContext;

  Var push(const char* kind, std::vector<NodeId> inputs, Tensor value, BackwardFn fn, bool rg) {
    Node n;
    n.kind = kind;
    n.inputs = std::move(inputs);
    n.value = std::move(value);
    n.backward = std::move(fn);
    n.requires_grad = rg;
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<NodeId>(nodes_.size() - 1));
  }

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

inline const Tensor& Var::value() const { return graph_->node(id_).value; }

/// View handed to a node's backward function.
class BackwardContext {
 public:
  BackwardContext(Graph& g, NodeId id) : g_(g), node_(g.nodes_[id]), id_(id) {}

  const Tensor& output() const { return node_.value; }
  const Tensor& grad_output() const { return g_.grads_[id_]; }
  const Tensor& input(std::size_t k) const { return g_.nodes_[node_.inputs[k]].value; }
  bool wants(std::size_t k) const { return g_.nodes_[node_.inputs[k]].requires_grad; }

  /// Gradient buffer of input k, zero-initialized on first use.
  std::span<double> grad(std::size_t k) {
    const NodeId in = node_.inputs[k];
    Tensor& gbuf = g_.grads_[in];
    if (gbuf.empty() && !g_.nodes_[in].value.empty()) gbuf = Tensor(g_.nodes_[in].value.shape());
    return gbuf.data();
  }

 private:
  Graph& g_;
  const Node& node_;
  NodeId id_;
};

inline std::vector<Tensor> Graph::backward(Var loss, std::span<const Var> wrt) {
  if (&loss.graph() != this) throw ContractError("backward: loss from another graph");
  if (loss.value().size() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  grads_.assign(nodes_.size(), Tensor());
  grads_[loss.id()] = Tensor(loss.shape(), 1.0);
  for (std::int64_t i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || !n.backward || grads_[i].empty()) continue;
    BackwardContext ctx(*this, static_cast<NodeId>(i));
    n.backward(ctx);
    for (NodeId in : n.inputs) {
      if (!grads_[in].all_finite()) throw DifferentiationError(n.kind, "non-finite gradient");
    }
  }
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const Var& v : wrt) {
    Tensor& g = grads_[v.id()];
    if (g.empty()) {
      out.emplace_back(v.shape(), 0.0);
    } else {
      if (!g.all_finite()) throw DifferentiationError(nodes_[v.id()].kind, "non-finite gradient");
      out.push_back(std::move(g));
    }
  }
  grads_.clear();
  grads_.shrink_to_fit();
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise primitives

namespace detail {

inline void check_broadcast(const char* kind, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape() || a.size() == 1 || b.size() == 1) return;
  throw ContractError(std::string(kind) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
}

// f(x, y) -> out; da(x, y, out), db(x, y, out) -> partials.
template <class F, class DA, class DB>
Var binary(const char* kind, Var a, Var b, F f, DA da, DB db) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  check_broadcast(kind, av, bv);
  const std::size_t n = std::max(av.size(), bv.size());
  const Shape& shape = av.size() >= bv.size() ? av.shape() : bv.shape();
  const std::size_t sa = av.size() == 1 ? 0 : 1;
  const std::size_t sb = bv.size() == 1 ? 0 : 1;
  Tensor out(shape);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i * sa], bv[i * sb]);
  return a.graph().record(kind, {a, b}, std::move(out), [=](BackwardContext& ctx) {
    const Tensor& x = ctx.input(0);
    const Tensor& y = ctx.input(1);
    const Tensor& o = ctx.output();
    const Tensor& g = ctx.grad_output();
    if (ctx.wants(0)) {
      auto ga = ctx.grad(0);
      for (std::size_t i = 0; i < n; ++i) ga[i * sa] += g[i] * da(x[i * sa], y[i * sb], o[i]);
    }
    if (ctx.wants(1)) {
      auto gb = ctx.grad(1);
      for (std::size_t i = 0; i < n; ++i) gb[i * sb] += g[i] * db(x[i * sa], y[i * sb], o[i]);
    }
  });
}

// f(x) -> out; df(x, out) -> derivative.
template <class F, class DF>
Var unary(const char* kind, Var a, F f, DF df) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return a.graph().record(kind, {a}, std::move(out), [=](BackwardContext& ctx) {
    const Tensor& x = ctx.input(0);
    const Tensor& o = ctx.output();
    const Tensor& g = ctx.grad_output();
    auto gx = ctx.grad(0);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i] * df(x[i], o[i]);
  });
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline Var add(Var a, Var b) {
  return detail::binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}
inline Var sub(Var a, Var b) {
  return detail::binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}
inline Var mul(Var a, Var b) {
  return detail::binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}
inline Var div(Var a, Var b) {
  return detail::binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double o) { return -o / y; });
}
/// Elementwise max; the subgradient goes to `a` on ties.
inline Var maximum(Var a, Var b) {
  return detail::binary(
      "maximum", a, b, [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y, double) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x >= y ? 0.0 : 1.0; });
}

inline Var neg(Var a) {
  return detail::unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}
inline Var exp(Var a) {
  return detail::unary("exp", a, [](double x) { return std::exp(x); }, [](double, double o) { return o; });
}
inline Var log(Var a) {
  return detail::unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}
inline Var softplus(Var a) {
  return detail::unary("softplus", a, detail::softplus, [](double x, double) { return detail::sigmoid(x); });
}
inline Var tanh(Var a) {
  return detail::unary(
      "tanh", a, [](double x) { return std::tanh(x); }, [](double, double o) { return 1.0 - o * o; });
}
inline Var scale(Var a, double c) {
  return detail::unary("scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}
inline Var shift(Var a, double c) {
  return detail::unary("shift", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator+(Var a, double c) { return shift(a, c); }
inline Var operator-(Var a, double c) { return shift(a, -c); }

// ---------------------------------------------------------------------------
// Reductions

inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph().record("sum", {a}, Tensor::scalar(s), [](BackwardContext& ctx) {
    const double g = ctx.grad_output()[0];
    for (double& v : ctx.grad(0)) v += g;
  });
}

inline Var mean(Var a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph().record("mean", {a}, Tensor::scalar(s * inv), [inv](BackwardContext& ctx) {
    const double g = ctx.grad_output()[0] * inv;
    for (double& v : ctx.grad(0)) v += g;
  });
}

/// Sum of squares of all entries.
inline Var squared_norm(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v * v;
  return a.graph().record("squared_norm", {a}, Tensor::scalar(s), [](BackwardContext& ctx) {
    const double g = 2.0 * ctx.grad_output()[0];
    const Tensor& x = ctx.input(0);
    auto gx = ctx.grad(0);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g * x[i];
  });
}

// ---------------------------------------------------------------------------
// Structural ops

inline Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.graph().record("reshape", {a}, std::move(out), [](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    auto gx = ctx.grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

namespace detail {
struct AxisSplit {
  std::size_t outer, len, inner;
};
inline AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}
}  // namespace detail

/// Entries [begin, end) along `axis`.
inline Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = a.shape();
  if (axis >= s.size() || begin > end || end > s[axis]) {
    throw ContractError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                        ") on axis " + std::to_string(axis) + " of " + shape_str(s));
  }
  const auto sp = detail::split_axis(s, axis);
  Shape os = s;
  os[axis] = end - begin;
  Tensor out(os);
  const std::size_t w = (end - begin) * sp.inner;
  const auto& src = a.value();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(src.data().begin() + (o * sp.len + begin) * sp.inner, w, out.data().begin() + o * w);
  }
  return a.graph().record("slice", {a}, std::move(out), [sp, begin, w](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_output();
    auto gx = ctx.grad(0);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      const std::size_t base = (o * sp.len + begin) * sp.inner;
      for (std::size_t j = 0; j < w; ++j) gx[base + j] += g[o * w + j];
    }
  });
}

inline Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  Shape os = parts[0].shape();
  if (axis >= os.size()) throw ContractError("concat: bad axis");
  std::size_t total = 0;
  for (const Var& p : parts) {
    Shape ps = p.shape();
    if (ps.size() != os.size()) throw ContractError("concat: rank mismatch");
    total += ps[axis];
    ps[axis] = os[axis];
    if (ps != os) throw ContractError("concat: shape mismatch");
  }
  os[axis] = total;
  const auto sp = detail::split_axis(os, axis);
  Tensor out(os);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const std::size_t len = p.shape()[axis];
    offsets.push_back(off);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(p.value().data().begin() + o * len * sp.inner, len * sp.inner,
                  out.data().begin() + (o * sp.len + off) * sp.inner);
    }
    off += len;
  }
  return parts[0].graph().record(
      "concat", parts, std::move(out), [sp, offsets, axis](BackwardContext& ctx) {
        const Tensor& g = ctx.grad_output();
        for (std::size_t k = 0; k < offsets.size(); ++k) {
          if (!ctx.wants(k)) continue;
          const std::size_t len = ctx.input(k).shape()[axis];
          auto gx = ctx.grad(k);
          for (std::size_t o = 0; o < sp.outer; ++o) {
            const std::size_t src = (o * sp.len + offsets[k]) * sp.inner;
            const std::size_t dst = o * len * sp.inner;
            for (std::size_t j = 0; j < len * sp.inner; ++j) gx[dst + j] += g[src + j];
          }
        }
      });
}
inline Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

/// Periodic shift along the last axis: out[..., i] = a[..., (i - shift) mod n].
/// Composite of slice and concat.
inline Var roll(Var a, std::ptrdiff_t shift) {
  const std::size_t axis = a.shape().size() - 1;
  const auto n = static_cast<std::ptrdiff_t>(a.shape()[axis]);
  const std::ptrdiff_t s = ((shift % n) + n) % n;
  if (s == 0) return a;
  const auto cut = static_cast<std::size_t>(n - s);
  return concat({slice(a, axis, cut, static_cast<std::size_t>(n)), slice(a, axis, 0, cut)}, axis);
}

// ---------------------------------------------------------------------------
// Linear algebra

namespace detail {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
}  // namespace detail

/// (m, k) x (k, n) -> (m, n).
inline Var matmul(Var a, Var b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0]) {
    throw ContractError("matmul: incompatible shapes " + shape_str(as) + " x " + shape_str(bs));
  }
  const auto m = static_cast<Eigen::Index>(as[0]);
  const auto k = static_cast<Eigen::Index>(as[1]);
  const auto n = static_cast<Eigen::Index>(bs[1]);
  Tensor out(Shape{as[0], bs[1]});
  detail::MapMat(out.data().data(), m, n).noalias() =
      detail::CMapMat(a.value().data().data(), m, k) * detail::CMapMat(b.value().data().data(), k, n);
  return a.graph().record("matmul", {a, b}, std::move(out), [m, k, n](BackwardContext& ctx) {
    detail::CMapMat g(ctx.grad_output().data().data(), m, n);
    if (ctx.wants(0)) {
      detail::MapMat(ctx.grad(0).data(), m, k).noalias() +=
          g * detail::CMapMat(ctx.input(1).data().data(), k, n).transpose();
    }
    if (ctx.wants(1)) {
      detail::MapMat(ctx.grad(1).data(), k, n).noalias() +=
          detail::CMapMat(ctx.input(0).data().data(), m, k).transpose() * g;
    }
  });
}

namespace detail {

// col[(c*K + k), b*N + i] = x[b, c, (i + k - K/2) mod N]
inline void im2col(std::span<const double> x, std::size_t B, std::size_t C, std::size_t N,
                   std::size_t K, std::span<double> col) {
  const std::size_t pad = K / 2;
  const std::size_t cols = B * N;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t k = 0; k < K; ++k) {
      double* dst = col.data() + (c * K + k) * cols;
      const std::size_t off = (k + N - pad % N) % N;
      for (std::size_t b = 0; b < B; ++b) {
        const double* src = x.data() + (b * C + c) * N;
        double* d = dst + b * N;
        const std::size_t head = N - off;
        std::copy_n(src + off, head, d);
        std::copy_n(src, off, d + head);
      }
    }
  }
}

inline void col2im_add(std::span<const double> col, std::size_t B, std::size_t C, std::size_t N,
                       std::size_t K, std::span<double> gx) {
  const std::size_t pad = K / 2;
  const std::size_t cols = B * N;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t k = 0; k < K; ++k) {
      const double* src = col.data() + (c * K + k) * cols;
      const std::size_t off = (k + N - pad % N) % N;
      for (std::size_t b = 0; b < B; ++b) {
        double* d = gx.data() + (b * C + c) * N;
        const double* s = src + b * N;
        for (std::size_t i = 0; i < N; ++i) d[(i + off) % N] += s[i];
      }
    }
  }
}

}  // namespace detail

/// Circular 1-D cross-correlation over the last axis with bias.
/// x: (B, Cin, N), weight: (Cout, Cin, K) with K odd, bias: (Cout) -> (B, Cout, N).
inline Var conv1d_circular(Var x, Var weight, Var bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.size() != 3 || ws.size() != 3 || ws[1] != xs[1] || ws[2] % 2 == 0 ||
      bias.shape() != Shape{ws[0]}) {
    throw ContractError("conv1d_circular: incompatible shapes x" + shape_str(xs) + " w" +
                        shape_str(ws) + " b" + shape_str(bias.shape()));
  }
  const std::size_t B = xs[0], Cin = xs[1], N = xs[2], Cout = ws[0], K = ws[2];
  const auto rows = static_cast<Eigen::Index>(Cin * K);
  const auto cols = static_cast<Eigen::Index>(B * N);
  std::vector<double> col(Cin * K * B * N);
  detail::im2col(x.value().data(), B, Cin, N, K, col);
  detail::RowMat prod(static_cast<Eigen::Index>(Cout), cols);
  prod.noalias() = detail::CMapMat(weight.value().data().data(), static_cast<Eigen::Index>(Cout), rows) *
                   detail::CMapMat(col.data(), rows, cols);
  Tensor out(Shape{B, Cout, N});
  const auto& bv = bias.value();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < Cout; ++o)
      for (std::size_t i = 0; i < N; ++i)
        out[(b * Cout + o) * N + i] = prod(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(b * N + i)) + bv[o];

  return x.graph().record(
      "conv1d_circular", {x, weight, bias}, std::move(out), [=](BackwardContext& ctx) {
        const Tensor& g = ctx.grad_output();
        detail::RowMat G(static_cast<Eigen::Index>(Cout), cols);
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t o = 0; o < Cout; ++o)
            for (std::size_t i = 0; i < N; ++i)
              G(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(b * N + i)) = g[(b * Cout + o) * N + i];
        if (ctx.wants(2)) {
          auto gb = ctx.grad(2);
          for (std::size_t o = 0; o < Cout; ++o) gb[o] += G.row(static_cast<Eigen::Index>(o)).sum();
        }
        if (!ctx.wants(0) && !ctx.wants(1)) return;
        std::vector<double> colb(static_cast<std::size_t>(rows * cols));
        detail::im2col(ctx.input(0).data(), B, Cin, N, K, colb);
        detail::CMapMat colm(colb.data(), rows, cols);
        if (ctx.wants(1)) {
          detail::MapMat(ctx.grad(1).data(), static_cast<Eigen::Index>(Cout), rows).noalias() +=
              G * colm.transpose();
        }
        if (ctx.wants(0)) {
          detail::RowMat gcol(rows, cols);
          gcol.noalias() =
              detail::CMapMat(ctx.input(1).data().data(), static_cast<Eigen::Index>(Cout), rows).transpose() * G;
          detail::col2im_add(std::span<const double>(gcol.data(), static_cast<std::size_t>(gcol.size())), B,
                             Cin, N, K, ctx.grad(0));
        }
      });
}

// ---------------------------------------------------------------------------
// Whole-function differentiation

struct ValueAndGrad {
  double value = 0.0;
  std::vector<Tensor> grads;
};

/// Evaluate f at `at` and differentiate. `f(Graph&, std::span<const Var>) -> Var` must
/// return a scalar node; one gradient per input tensor is returned.
template <class F>
ValueAndGrad value_and_grad(F&& f, std::span<const Tensor> at) {
  Graph g;
  std::vector<Var> params;
  params.reserve(at.size());
  for (const Tensor& t : at) params.push_back(g.parameter(t));
  Var loss = f(g, std::span<const Var>(params));
  ValueAndGrad r;
  r.value = loss.value().item();
  if (!std::isfinite(r.value)) throw DifferentiationError(g.node(loss.id()).kind, "non-finite loss");
  r.grads = g.backward(loss, params);
  return r;
}

template <class F>
std::vector<Tensor> grad(F&& f, std::span<const Tensor> at) {
  return value_and_grad(std::forward<F>(f), at).grads;
}

}  // namespace assimlab::ad
