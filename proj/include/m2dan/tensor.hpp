#pragma once

// Dense f64 tensors and a define-by-run reverse-mode tape.
//
// A Tensor is a plain value. A Tape records operations over Vars (handles to
// tape nodes); parameters enter the tape through Tape::leaf(), which links the
// node back to the owning Tensor so backward() can deposit gradients there.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "m2dan/error.hpp"

namespace m2dan {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

struct Tensor {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::optional<std::vector<double>> grad;

  static Tensor build(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (shape.empty()) throw Error(ErrorCode::InvalidShape, "empty shape");
    for (auto d : shape)
      if (d == 0) throw Error(ErrorCode::InvalidShape, "zero dimension in " + shape_str(shape));
    if (values.size() != numel(shape))
      throw Error(ErrorCode::ShapeMismatch, std::to_string(values.size()) + " values for shape " +
                                                shape_str(shape));
    Tensor t;
    t.shape = std::move(shape);
    t.data = std::move(values);
    t.requires_grad = requires_grad;
    return t;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = numel(shape);
    return build(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor scalar(double v) { return build({1}, {v}); }

  std::size_t size() const { return data.size(); }

  void zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), 0.0);
  }
};

// Probabilities entering log() are clamped to [lo, hi] unless disabled; with
// the clamp active this is the 0*log(0) := 0 convention used by the losses.
struct LogClamp {
  bool enabled = true;
  double lo = 1e-12;
  double hi = 1.0;
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Shape& shape() const;
  std::span<const double> value() const;
  std::span<const double> grad() const;
  bool requires_grad() const;
  std::size_t size() const { return value().size(); }
  double item() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Receives the upstream gradient of the recorded node.
  using BackwardFn = std::function<void(Tape&, std::span<const double>)>;

  Tape() = default;
  // With grad disabled nothing requires gradient and no backward rules are
  // kept (inference).
  explicit Tape(bool grad_enabled) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Copies the tensor's values; the node never receives gradient.
  Var constant(const Tensor& t) { return push(t.shape, t.data, false, nullptr); }
  Var constant(Shape shape, std::vector<double> values) {
    return constant(Tensor::build(std::move(shape), std::move(values)));
  }

  // Links the node to `t`: after backward(), t.grad accumulates dL/dt.
  Var leaf(Tensor& t) {
    if (!t.requires_grad || !grad_enabled_) return constant(t);
    return push(t.shape, t.data, true, &t);
  }

  // Records an op output. The backward rule is kept only when some input
  // requires gradient.
  Var record(Shape shape, std::vector<double> value, std::initializer_list<Var> inputs,
             BackwardFn fn) {
    return record(std::move(shape), std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(fn));
  }

  Var record(Shape shape, std::vector<double> value, std::span<const Var> inputs, BackwardFn fn) {
    bool rg = false;
    for (const auto& in : inputs) rg = rg || node(in).requires_grad;
    Var out = push(std::move(shape), std::move(value), rg, nullptr);
    if (rg) nodes_.back().backward = std::move(fn);
    return out;
  }

  // Gradient buffer of a node, allocated on first use. Empty when the node
  // does not require gradient.
  std::span<double> grad_of(Var v) {
    auto& n = node(v);
    if (!n.requires_grad) return {};
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
  }

  bool requires_grad(Var v) const { return node(v).requires_grad; }
  const Shape& shape(Var v) const { return node(v).shape; }
  std::span<const double> value(Var v) const { return node(v).value; }
  std::span<const double> grad(Var v) const { return node(v).grad; }

  std::size_t size() const { return nodes_.size(); }

  // Seeds dL/dL = 1 and replays the tape in reverse recording order, then adds
  // leaf gradients into their owning tensors.
  void backward(Var loss) {
    const auto& ln = node(loss);
    if (ln.shape != Shape{1})
      throw Error(ErrorCode::NotScalar, "loss has shape " + shape_str(ln.shape));
    if (!ln.requires_grad) return;
    grad_of(loss)[0] += 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.backward && !n.grad.empty()) n.backward(*this, n.grad);
    }
    for (auto& n : nodes_) {
      if (n.sink == nullptr || n.grad.empty()) continue;
      if (!n.sink->grad) n.sink->grad.emplace(n.grad.size(), 0.0);
      auto& g = *n.sink->grad;
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += n.grad[j];
    }
  }

 private:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    Tensor* sink = nullptr;
    BackwardFn backward;
  };

  Var push(Shape shape, std::vector<double> value, bool rg, Tensor* sink) {
    nodes_.push_back(Node{std::move(shape), std::move(value), {}, rg, sink, {}});
    return Var(this, nodes_.size() - 1);
  }

  Node& node(Var v) { return nodes_.at(v.id()); }
  const Node& node(Var v) const { return nodes_.at(v.id()); }

  std::deque<Node> nodes_;
  bool grad_enabled_ = true;
};

inline const Shape& Var::shape() const { return tape_->shape(*this); }
inline std::span<const double> Var::value() const { return tape_->value(*this); }
inline std::span<const double> Var::grad() const { return tape_->grad(*this); }
inline bool Var::requires_grad() const { return tape_->requires_grad(*this); }
inline double Var::item() const {
  if (shape() != Shape{1}) throw Error(ErrorCode::NotScalar, "item() on " + shape_str(shape()));
  return value()[0];
}

inline Tensor to_tensor(Var v) {
  auto val = v.value();
  return Tensor::build(v.shape(), std::vector<double>(val.begin(), val.end()));
}

namespace detail {

inline void accumulate(std::span<double> dst, std::span<const double> src, double scale = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

inline bool is_scalar(const Shape& s) { return s == Shape{1}; }

// Row-major matrix views used by the GEMM-backed kernels.
using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const MatRM>;
using Map = Eigen::Map<MatRM>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops. `b` may be a shape-[1] scalar broadcast against `a`.

enum class BinaryKind { Add, Sub, Mul };

inline Var elementwise(BinaryKind kind, Var a, Var b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  const bool bcast = sa != sb;
  if (bcast && !detail::is_scalar(sb))
    throw Error(ErrorCode::ShapeMismatch, shape_str(sa) + " vs " + shape_str(sb));
  auto av = a.value();
  auto bv = b.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double y = bcast ? bv[0] : bv[i];
    switch (kind) {
      case BinaryKind::Add: out[i] = av[i] + y; break;
      case BinaryKind::Sub: out[i] = av[i] - y; break;
      case BinaryKind::Mul: out[i] = av[i] * y; break;
    }
  }
  return a.tape().record(sa, std::move(out), {a, b}, [kind, a, b, bcast](Tape& t, std::span<const double> g) {
    auto ga = t.grad_of(a);
    auto gb = t.grad_of(b);
    auto av = t.value(a);
    auto bv = t.value(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      double y = bcast ? bv[0] : bv[i];
      double da = 0.0, db = 0.0;
      switch (kind) {
        case BinaryKind::Add: da = g[i]; db = g[i]; break;
        case BinaryKind::Sub: da = g[i]; db = -g[i]; break;
        case BinaryKind::Mul: da = g[i] * y; db = g[i] * av[i]; break;
      }
      if (!ga.empty()) ga[i] += da;
      if (!gb.empty()) gb[bcast ? 0 : i] += db;
    }
  });
}

inline Var add(Var a, Var b) { return elementwise(BinaryKind::Add, a, b); }
inline Var sub(Var a, Var b) { return elementwise(BinaryKind::Sub, a, b); }
inline Var mul(Var a, Var b) { return elementwise(BinaryKind::Mul, a, b); }

// scale * a + shift with constant coefficients.
inline Var affine(Var a, double scale, double shift = 0.0) {
  auto av = a.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * av[i] + shift;
  return a.tape().record(a.shape(), std::move(out), {a}, [a, scale](Tape& t, std::span<const double> g) {
    detail::accumulate(t.grad_of(a), g, scale);
  });
}

// ---------------------------------------------------------------------------
// Unary maps.

enum class UnaryKind { Exp, Log, Relu, Neg, Square };

namespace detail {

template <UnaryKind K>
void unary_forward(std::span<const double> x, std::span<double> y, LogClamp clamp) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    if constexpr (K == UnaryKind::Exp) y[i] = std::exp(v);
    else if constexpr (K == UnaryKind::Log) {
      if (clamp.enabled) {
        y[i] = std::log(std::clamp(v, clamp.lo, clamp.hi));
      } else {
        if (!(v > 0.0)) throw Error(ErrorCode::DomainError, "log of non-positive value");
        y[i] = std::log(v);
      }
    } else if constexpr (K == UnaryKind::Relu) y[i] = v > 0.0 ? v : 0.0;
    else if constexpr (K == UnaryKind::Neg) y[i] = -v;
    else y[i] = v * v;
  }
}

template <UnaryKind K>
void unary_backward(std::span<const double> x, std::span<const double> g, std::span<double> gx, LogClamp clamp) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double v = x[i];
    if constexpr (K == UnaryKind::Exp) gx[i] += g[i] * std::exp(v);
    else if constexpr (K == UnaryKind::Log) {
      // clamped entries are locally constant
      if (!clamp.enabled || (v >= clamp.lo && v <= clamp.hi)) gx[i] += g[i] / v;
    } else if constexpr (K == UnaryKind::Relu) gx[i] += v > 0.0 ? g[i] : 0.0;
    else if constexpr (K == UnaryKind::Neg) gx[i] -= g[i];
    else gx[i] += 2.0 * v * g[i];
  }
}

template <UnaryKind K>
Var unary(Var a, LogClamp clamp) {
  std::vector<double> out(a.size());
  unary_forward<K>(a.value(), out, clamp);
  return a.tape().record(a.shape(), std::move(out), {a}, [a, clamp](Tape& t, std::span<const double> g) {
    unary_backward<K>(t.value(a), g, t.grad_of(a), clamp);
  });
}

}  // namespace detail

inline Var map_unary(UnaryKind kind, Var a, LogClamp clamp = {}) {
  switch (kind) {
    case UnaryKind::Exp: return detail::unary<UnaryKind::Exp>(a, clamp);
    case UnaryKind::Log: return detail::unary<UnaryKind::Log>(a, clamp);
    case UnaryKind::Relu: return detail::unary<UnaryKind::Relu>(a, clamp);
    case UnaryKind::Neg: return detail::unary<UnaryKind::Neg>(a, clamp);
    case UnaryKind::Square: return detail::unary<UnaryKind::Square>(a, clamp);
  }
  throw Error(ErrorCode::InvalidSpec, "unknown unary op");
}

inline Var exp(Var a) { return map_unary(UnaryKind::Exp, a); }
inline Var log(Var a, LogClamp clamp = {}) { return map_unary(UnaryKind::Log, a, clamp); }
inline Var relu(Var a) { return map_unary(UnaryKind::Relu, a); }
inline Var neg(Var a) { return map_unary(UnaryKind::Neg, a); }
inline Var square(Var a) { return map_unary(UnaryKind::Square, a); }

// a^p elementwise for a >= 0. The derivative at a == 0 is taken as 0 (it is
// exactly 0 for p > 1, and p == 0 is a constant map).
inline Var pow(Var a, double p) {
  auto av = a.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (av[i] < 0.0) throw Error(ErrorCode::DomainError, "pow of negative base");
    out[i] = std::pow(av[i], p);
  }
  return a.tape().record(a.shape(), std::move(out), {a}, [a, p](Tape& t, std::span<const double> g) {
    auto ga = t.grad_of(a);  // allocated even when p == 0 so the leaf sees a zero gradient
    if (p == 0.0) return;
    auto av = t.value(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (av[i] > 0.0) ga[i] += g[i] * p * std::pow(av[i], p - 1.0);
  });
}

// ---------------------------------------------------------------------------

inline Var matmul(Var a, Var b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
    throw Error(ErrorCode::ShapeMismatch, "matmul " + shape_str(sa) + " x " + shape_str(sb));
  const auto m = static_cast<Eigen::Index>(sa[0]);
  const auto k = static_cast<Eigen::Index>(sa[1]);
  const auto n = static_cast<Eigen::Index>(sb[1]);
  std::vector<double> out(static_cast<std::size_t>(m * n));
  detail::Map(out.data(), m, n).noalias() =
      detail::MapC(a.value().data(), m, k) * detail::MapC(b.value().data(), k, n);
  return a.tape().record({sa[0], sb[1]}, std::move(out), {a, b},
                         [a, b, m, k, n](Tape& t, std::span<const double> g) {
                           detail::MapC G(g.data(), m, n);
                           if (auto ga = t.grad_of(a); !ga.empty())
                             detail::Map(ga.data(), m, k).noalias() +=
                                 G * detail::MapC(t.value(b).data(), k, n).transpose();
                           if (auto gb = t.grad_of(b); !gb.empty())
                             detail::Map(gb.data(), k, n).noalias() +=
                                 detail::MapC(t.value(a).data(), m, k).transpose() * G;
                         });
}

// ---------------------------------------------------------------------------
// Reductions. Reduced axes are dropped from the output shape; reducing every
// axis yields shape [1].

enum class ReduceKind { Sum, Mean };

inline Var reduce(ReduceKind kind, Var a, std::optional<std::vector<std::size_t>> axes = std::nullopt) {
  const Shape in_shape = a.shape();
  const std::size_t rank = in_shape.size();
  std::vector<bool> reduced(rank, !axes.has_value());
  if (axes) {
    for (auto ax : *axes) {
      if (ax >= rank) throw Error(ErrorCode::InvalidAxis, "axis " + std::to_string(ax) + " for " + shape_str(in_shape));
      reduced[ax] = true;
    }
  }
  Shape out_shape;
  std::size_t count = 1;
  for (std::size_t d = 0; d < rank; ++d) {
    if (reduced[d]) count *= in_shape[d];
    else out_shape.push_back(in_shape[d]);
  }
  if (out_shape.empty()) out_shape = {1};

  // Flat input index -> flat output index.
  const std::size_t n_in = numel(in_shape);
  std::vector<std::size_t> target(n_in);
  {
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t i = 0; i < n_in; ++i) {
      std::size_t o = 0;
      for (std::size_t d = 0; d < rank; ++d)
        if (!reduced[d]) o = o * in_shape[d] + idx[d];
      target[i] = o;
      for (std::size_t d = rank; d-- > 0;) {
        if (++idx[d] < in_shape[d]) break;
        idx[d] = 0;
      }
    }
  }
  const double scale = kind == ReduceKind::Mean ? 1.0 / static_cast<double>(count) : 1.0;
  auto av = a.value();
  std::vector<double> out(numel(out_shape), 0.0);
  for (std::size_t i = 0; i < n_in; ++i) out[target[i]] += av[i];
  if (scale != 1.0)
    for (auto& v : out) v *= scale;
  return a.tape().record(std::move(out_shape), std::move(out), {a},
                         [a, target = std::move(target), scale](Tape& t, std::span<const double> g) {
                           auto ga = t.grad_of(a);
                           for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += scale * g[target[i]];
                         });
}

inline Var sum(Var a) { return reduce(ReduceKind::Sum, a); }
inline Var mean(Var a) { return reduce(ReduceKind::Mean, a); }
inline Var sum(Var a, std::vector<std::size_t> axes) { return reduce(ReduceKind::Sum, a, std::move(axes)); }
inline Var mean(Var a, std::vector<std::size_t> axes) { return reduce(ReduceKind::Mean, a, std::move(axes)); }

// ---------------------------------------------------------------------------

inline Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat of nothing");
  const Shape first = parts[0].shape();
  if (axis >= first.size()) throw Error(ErrorCode::InvalidAxis, "concat axis " + std::to_string(axis));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != first.size()) throw Error(ErrorCode::ShapeMismatch, "concat rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d)
      if (d != axis && s[d] != first[d])
        throw Error(ErrorCode::ShapeMismatch, "concat " + shape_str(first) + " with " + shape_str(s));
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t out_row = out_shape[axis] * inner;

  std::vector<double> out(numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t row = p.shape()[axis] * inner;
    auto pv = p.value();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pv.begin() + o * row, row, out.begin() + o * out_row + off);
    off += row;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  auto& tape = parts[0].tape();
  return tape.record(std::move(out_shape), std::move(out), std::span<const Var>(inputs),
                     [inputs, offsets, outer, inner, out_row, axis](Tape& t, std::span<const double> g) {
                       for (std::size_t k = 0; k < inputs.size(); ++k) {
                         auto gp = t.grad_of(inputs[k]);
                         if (gp.empty()) continue;
                         const std::size_t row = t.shape(inputs[k])[axis] * inner;
                         for (std::size_t o = 0; o < outer; ++o)
                           for (std::size_t j = 0; j < row; ++j) gp[o * row + j] += g[o * out_row + offsets[k] + j];
                       }
                     });
}

inline Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

// ---------------------------------------------------------------------------
// softmax / log_softmax along one axis, with max subtraction.

namespace detail {

struct AxisLayout {
  std::size_t outer = 1, len = 1, inner = 1;
  std::size_t at(std::size_t o, std::size_t j, std::size_t i) const { return (o * len + j) * inner + i; }
};

inline AxisLayout axis_layout(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) throw Error(ErrorCode::InvalidAxis, "axis " + std::to_string(axis) + " for " + shape_str(s));
  AxisLayout l;
  for (std::size_t d = 0; d < axis; ++d) l.outer *= s[d];
  l.len = s[axis];
  for (std::size_t d = axis + 1; d < s.size(); ++d) l.inner *= s[d];
  return l;
}

inline std::vector<double> log_softmax_values(std::span<const double> x, const AxisLayout& l) {
  for (double v : x)
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "softmax input not finite");
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t i = 0; i < l.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < l.len; ++j) mx = std::max(mx, x[l.at(o, j, i)]);
      double s = 0.0;
      for (std::size_t j = 0; j < l.len; ++j) s += std::exp(x[l.at(o, j, i)] - mx);
      const double lse = std::log(s);
      for (std::size_t j = 0; j < l.len; ++j) out[l.at(o, j, i)] = x[l.at(o, j, i)] - mx - lse;
    }
  return out;
}

}  // namespace detail

inline Var softmax(Var a, std::size_t axis) {
  const auto l = detail::axis_layout(a.shape(), axis);
  auto out = detail::log_softmax_values(a.value(), l);
  for (auto& v : out) v = std::exp(v);
  auto y = out;
  return a.tape().record(a.shape(), std::move(out), {a}, [a, l, y = std::move(y)](Tape& t, std::span<const double> g) {
    auto ga = t.grad_of(a);
    for (std::size_t o = 0; o < l.outer; ++o)
      for (std::size_t i = 0; i < l.inner; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < l.len; ++j) dot += g[l.at(o, j, i)] * y[l.at(o, j, i)];
        for (std::size_t j = 0; j < l.len; ++j) {
          const auto k = l.at(o, j, i);
          ga[k] += y[k] * (g[k] - dot);
        }
      }
  });
}

inline Var log_softmax(Var a, std::size_t axis) {
  const auto l = detail::axis_layout(a.shape(), axis);
  auto out = detail::log_softmax_values(a.value(), l);
  auto y = out;
  return a.tape().record(a.shape(), std::move(out), {a}, [a, l, y = std::move(y)](Tape& t, std::span<const double> g) {
    auto ga = t.grad_of(a);
    for (std::size_t o = 0; o < l.outer; ++o)
      for (std::size_t i = 0; i < l.inner; ++i) {
        double gs = 0.0;
        for (std::size_t j = 0; j < l.len; ++j) gs += g[l.at(o, j, i)];
        for (std::size_t j = 0; j < l.len; ++j) {
          const auto k = l.at(o, j, i);
          ga[k] += g[k] - std::exp(y[k]) * gs;
        }
      }
  });
}

// ---------------------------------------------------------------------------
// Shape plumbing.

inline Var reshape(Var a, Shape shape) {
  if (numel(shape) != a.size())
    throw Error(ErrorCode::ShapeMismatch, "reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  auto av = a.value();
  return a.tape().record(std::move(shape), std::vector<double>(av.begin(), av.end()), {a},
                         [a](Tape& t, std::span<const double> g) { detail::accumulate(t.grad_of(a), g); });
}

// Gathers rows (first-axis slices) in the given order.
inline Var select_rows(Var a, std::vector<std::size_t> rows) {
  const Shape& s = a.shape();
  if (rows.empty()) throw Error(ErrorCode::InvalidShape, "select_rows with no rows");
  const std::size_t row = a.size() / s[0];
  for (auto r : rows)
    if (r >= s[0]) throw Error(ErrorCode::InvalidAxis, "row " + std::to_string(r) + " out of range");
  Shape out_shape = s;
  out_shape[0] = rows.size();
  auto av = a.value();
  std::vector<double> out(rows.size() * row);
  for (std::size_t k = 0; k < rows.size(); ++k) std::copy_n(av.begin() + rows[k] * row, row, out.begin() + k * row);
  return a.tape().record(std::move(out_shape), std::move(out), {a},
                         [a, rows = std::move(rows), row](Tape& t, std::span<const double> g) {
                           auto ga = t.grad_of(a);
                           for (std::size_t k = 0; k < rows.size(); ++k)
                             for (std::size_t j = 0; j < row; ++j) ga[rows[k] * row + j] += g[k * row + j];
                         });
}

// Same values, cut from the graph.
inline Var detach(Var a) {
  auto av = a.value();
  return a.tape().constant(a.shape(), std::vector<double>(av.begin(), av.end()));
}

}  // namespace m2dan
