// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

#include "confbt/numerics/rng.hpp"
#include "confbt/numerics/tensor.hpp"
#include "confbt/util/error.hpp"

namespace confbt {

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
};

/// Reverse-mode tape. Nodes are appended in creation order, which is a
/// topological order, so the backward sweep is a single reverse scan.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {
    nodes_.reserve(256);
  }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }

  Var Constant(Tensor t) { return Push(std::move(t), nullptr, false, {}); }

  /// Differentiable leaf owning its value.
  Var Leaf(Tensor t) { return Push(std::move(t), nullptr, grad_enabled_, {}); }

  /// Differentiable leaf that refers to caller-owned storage; the tensor
  /// must outlive the tape.
  Var Param(const Tensor& external) { return Push(Tensor(), &external, grad_enabled_, {}); }

  const Tensor& value(std::uint32_t id) const {
    const Node& n = nodes_[id];
    return n.ext ? *n.ext : n.own;
  }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

  /// Gradient of the last Backward() call, or nullptr when the node was not
  /// reached.
  const Tensor* grad(Var v) const {
    const Node& n = nodes_[v.id];
    return n.has_grad ? &n.grad : nullptr;
  }
  Tensor GradOrZero(Var v) const {
    const Tensor* g = grad(v);
    return g ? *g : Tensor(value(v.id).shape());
  }

  /// Accumulates d(seed * loss)/d(node) into every node on the path to `loss`.
  void Backward(Var loss, double seed = 1.0) {
    if (loss.tape != this) Fail(ErrorKind::kState, "backward: loss is not on this tape");
    const Tensor& lv = value(loss.id);
    if (lv.size() != 1) {
      Fail(ErrorKind::kDimension, "backward: loss must be scalar, got shape ",
           ShapeString(lv.shape()));
    }
    if (!grad_enabled_) Fail(ErrorKind::kState, "backward on a tape with gradients disabled");
    for (Node& n : nodes_) {
      n.has_grad = false;
    }
    Node& root = nodes_[loss.id];
    root.grad = Tensor(lv.shape(), seed);
    root.has_grad = true;
    for (std::int64_t i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.has_grad && n.backward) n.backward(*this, n.grad);
    }
  }

  /// Adds `g` into the gradient of node `id` (no-op for constants).
  void AccumulateGrad(std::uint32_t id, const Tensor& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
      return;
    }
    auto dst = n.grad.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  /// Same as AccumulateGrad but takes ownership (avoids a copy on first write).
  void AccumulateGrad(std::uint32_t id, Tensor&& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = std::move(g);
      n.has_grad = true;
      return;
    }
    auto dst = n.grad.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  /// Records an op output. `fn` is dropped when no input needs a gradient.
  Var Record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    bool needs = false;
    if (grad_enabled_) {
      for (const Var& v : inputs) needs = needs || nodes_[v.id].requires_grad;
    }
    return Push(std::move(value), nullptr, needs, needs ? std::move(fn) : BackwardFn{});
  }
  Var Record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
    bool needs = false;
    if (grad_enabled_) {
      for (const Var& v : inputs) needs = needs || nodes_[v.id].requires_grad;
    }
    return Push(std::move(value), nullptr, needs, needs ? std::move(fn) : BackwardFn{});
  }

 private:
  struct Node {
    Tensor own;
    const Tensor* ext = nullptr;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var Push(Tensor t, const Tensor* ext, bool requires_grad, BackwardFn fn) {
    Node n;
    n.own = std::move(t);
    n.ext = ext;
    n.requires_grad = requires_grad;
    n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

namespace ops {

namespace detail {

inline void SameTape(const Var& a, const Var& b) {
  if (a.tape != b.tape) Fail(ErrorKind::kState, "operands live on different tapes");
}

inline void SameShape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    Fail(ErrorKind::kDimension, op, " shape mismatch: ", ShapeString(a.shape()), " vs ",
         ShapeString(b.shape()));
  }
}

}  // namespace detail

inline Var Add(Var a, Var b) {
  detail::SameTape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  detail::SameShape(x, y, "add");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  const auto ia = a.id, ib = b.id;
  return a.tape->Record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    t.AccumulateGrad(ia, g);
    t.AccumulateGrad(ib, g);
  });
}

inline Var Sub(Var a, Var b) {
  detail::SameTape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  detail::SameShape(x, y, "sub");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  const auto ia = a.id, ib = b.id;
  return a.tape->Record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    t.AccumulateGrad(ia, g);
    Tensor neg = g;
    for (auto& v : neg.vec()) v = -v;
    t.AccumulateGrad(ib, std::move(neg));
  });
}

/// x (n x m) + bias broadcast over rows; bias has m elements.
inline Var AddRowBroadcast(Var a, Var bias) {
  detail::SameTape(a, bias);
  const Tensor& x = a.value();
  const Tensor& b = bias.value();
  kernels::RequireMatrix(x, "add_row_broadcast");
  if (b.size() != x.cols()) {
    Fail(ErrorKind::kDimension, "bias shape ", ShapeString(b.shape()),
         " does not broadcast over ", ShapeString(x.shape()));
  }
  Tensor out = x;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += b[j];
  const auto ia = a.id, ib = bias.id;
  const Shape bshape = b.shape();
  return a.tape->Record(std::move(out), {a, bias}, [ia, ib, bshape](Tape& t, const Tensor& g) {
    t.AccumulateGrad(ia, g);
    if (t.requires_grad(ib)) {
      Tensor gb(bshape);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g(i, j);
      t.AccumulateGrad(ib, std::move(gb));
    }
  });
}

inline Var Mul(Var a, Var b) {
  detail::SameTape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  detail::SameShape(x, y, "mul");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  const auto ia = a.id, ib = b.id;
  return a.tape->Record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) {
      Tensor ga = g;
      const Tensor& y = t.value(ib);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= y[i];
      t.AccumulateGrad(ia, std::move(ga));
    }
    if (t.requires_grad(ib)) {
      Tensor gb = g;
      const Tensor& x = t.value(ia);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= x[i];
      t.AccumulateGrad(ib, std::move(gb));
    }
  });
}

inline Var Scale(Var a, double s) {
  Tensor out = a.value();
  for (auto& v : out.vec()) v *= s;
  const auto ia = a.id;
  return a.tape->Record(std::move(out), {a}, [ia, s](Tape& t, const Tensor& g) {
    Tensor ga = g;
    for (auto& v : ga.vec()) v *= s;
    t.AccumulateGrad(ia, std::move(ga));
  });
}

inline Var Matmul(Var a, Var b) {
  detail::SameTape(a, b);
  Tensor out = kernels::Matmul(a.value(), b.value());
  const auto ia = a.id, ib = b.id;
  return a.tape->Record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) t.AccumulateGrad(ia, kernels::MatmulNT(g, t.value(ib)));
    if (t.requires_grad(ib)) t.AccumulateGrad(ib, kernels::MatmulTN(t.value(ia), g));
  });
}

/// a * b^T.
inline Var MatmulNT(Var a, Var b) {
  detail::SameTape(a, b);
  Tensor out = kernels::MatmulNT(a.value(), b.value());
  const auto ia = a.id, ib = b.id;
  return a.tape->Record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) t.AccumulateGrad(ia, kernels::Matmul(g, t.value(ib)));
    if (t.requires_grad(ib)) t.AccumulateGrad(ib, kernels::MatmulTN(g, t.value(ia)));
  });
}

inline Var Transpose(Var a) {
  Tensor out = kernels::Transpose(a.value());
  const auto ia = a.id;
  return a.tape->Record(std::move(out), {a}, [ia](Tape& t, const Tensor& g) {
    t.AccumulateGrad(ia, kernels::Transpose(g));
  });
}

inline Var Relu(Var a) {
  Tensor out = a.value();
  for (auto& v : out.vec()) v = v > 0.0 ? v : 0.0;
  const auto ia = a.id;
  return a.tape->Record(std::move(out), {a}, [ia](Tape& t, const Tensor& g) {
    const Tensor& x = t.value(ia);
    Tensor ga = g;
    for (std::size_t i = 0; i < ga.size(); ++i)
      if (!(x[i] > 0.0)) ga[i] = 0.0;
    t.AccumulateGrad(ia, std::move(ga));
  });
}

/// Row-wise softmax. With `causal`, row i only attends to columns
/// [0, i + offset]; masked entries are exactly zero.
inline Var SoftmaxRows(Var a, bool causal = false, std::size_t offset = 0) {
  const Tensor& x = a.value();
  kernels::RequireMatrix(x, "softmax");
  if (x.cols() == 0) Fail(ErrorKind::kDimension, "softmax over empty axis");
  Tensor out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const std::size_t valid = causal ? std::min(out.cols(), i + offset + 1) : out.cols();
    kernels::SoftmaxInPlace(out.row(i).data(), out.cols(), valid);
  }
  const auto ia = a.id;
  const std::uint32_t self = static_cast<std::uint32_t>(a.tape->size());
  return a.tape->Record(std::move(out), {a}, [ia, self](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(self);
    Tensor ga = g;
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) = y(i, j) * (g(i, j) - dot);
    }
    t.AccumulateGrad(ia, std::move(ga));
  });
}

/// Softmax along an axis of a matrix.
inline Var Softmax(Var a, std::size_t axis) {
  if (axis == 1) return SoftmaxRows(a);
  if (axis == 0) return Transpose(SoftmaxRows(Transpose(a)));
  Fail(ErrorKind::kDimension, "softmax axis ", axis, " invalid for rank 2");
}

inline Var LogSoftmaxRows(Var a) {
  const Tensor& x = a.value();
  kernels::RequireMatrix(x, "log_softmax");
  Tensor out = x;
  for (std::size_t i = 0; i < out.rows(); ++i)
    kernels::LogSoftmaxInPlace(out.row(i).data(), out.cols());
  const auto ia = a.id;
  const std::uint32_t self = static_cast<std::uint32_t>(a.tape->size());
  return a.tape->Record(std::move(out), {a}, [ia, self](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(self);
    Tensor ga = g;
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) gs += g(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) = g(i, j) - std::exp(y(i, j)) * gs;
    }
    t.AccumulateGrad(ia, std::move(ga));
  });
}

/// Row-wise layer normalization with learned gain and bias.
inline Var LayerNorm(Var a, Var gain, Var bias, double eps = 1e-6) {
  detail::SameTape(a, gain);
  detail::SameTape(a, bias);
  const Tensor& x = a.value();
  kernels::RequireMatrix(x, "layer_norm");
  const std::size_t n = x.rows(), m = x.cols();
  if (gain.value().size() != m || bias.value().size() != m) {
    Fail(ErrorKind::kDimension, "layer_norm parameter size mismatch for ", ShapeString(x.shape()));
  }
  Tensor xhat(x.shape());
  std::vector<double> inv_std(n);
  Tensor out(x.shape());
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < m; ++j) mean += x(i, j);
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) var += (x(i, j) - mean) * (x(i, j) - mean);
    var /= static_cast<double>(m);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < m; ++j) {
      xhat(i, j) = (x(i, j) - mean) * inv_std[i];
      out(i, j) = xhat(i, j) * gv[j] + bv[j];
    }
  }
  const auto ia = a.id, ig = gain.id, ib = bias.id;
  const Shape pshape = gv.shape();
  return a.tape->Record(
      std::move(out), {a, gain, bias},
      [ia, ig, ib, pshape, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& t, const Tensor& g) {
        const std::size_t n = g.rows(), m = g.cols();
        const Tensor& gv = t.value(ig);
        if (t.requires_grad(ig) || t.requires_grad(ib)) {
          Tensor gg(pshape), gb(pshape);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
              gg[j] += g(i, j) * xhat(i, j);
              gb[j] += g(i, j);
            }
          t.AccumulateGrad(ig, std::move(gg));
          t.AccumulateGrad(ib, std::move(gb));
        }
        if (t.requires_grad(ia)) {
          Tensor ga(g.shape());
          for (std::size_t i = 0; i < n; ++i) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
              const double d = g(i, j) * gv[j];
              s1 += d;
              s2 += d * xhat(i, j);
            }
            const double inv_m = 1.0 / static_cast<double>(m);
            for (std::size_t j = 0; j < m; ++j) {
              const double d = g(i, j) * gv[j];
              ga(i, j) = inv_std[i] * (d - inv_m * s1 - xhat(i, j) * inv_m * s2);
            }
          }
          t.AccumulateGrad(ia, std::move(ga));
        }
      });
}

/// Inverted dropout: survivors are scaled by 1/(1-rate). Identity when not
/// training or when rate is zero.
inline Var Dropout(Var a, double rate, RngStream& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    Fail(ErrorKind::kConfig, "dropout rate must be in [0,1), got ", rate);
  }
  if (!training || rate == 0.0) return a;
  const Tensor& x = a.value();
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor mask(x.shape());
  Tensor out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = rng.Uniform() < rate ? 0.0 : keep_scale;
    out[i] *= mask[i];
  }
  const auto ia = a.id;
  return a.tape->Record(std::move(out), {a}, [ia, mask = std::move(mask)](Tape& t, const Tensor& g) {
    Tensor ga = g;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= mask[i];
    t.AccumulateGrad(ia, std::move(ga));
  });
}

/// Rows of `table` selected by `ids` (embedding lookup).
inline Var GatherRows(Var table, std::span<const int> ids) {
  const Tensor& tb = table.value();
  kernels::RequireMatrix(tb, "gather_rows");
  const std::size_t m = tb.cols();
  Tensor out = Tensor::Zeros(ids.size(), m);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tb.rows()) {
      Fail(ErrorKind::kVocab, "token id ", ids[i], " outside table of ", tb.rows(), " rows");
    }
    std::copy_n(tb.row(static_cast<std::size_t>(ids[i])).begin(), m, out.row(i).begin());
  }
  const auto it = table.id;
  std::vector<int> idv(ids.begin(), ids.end());
  const Shape tshape = tb.shape();
  return table.tape->Record(std::move(out), {table},
                            [it, idv = std::move(idv), tshape](Tape& t, const Tensor& g) {
                              Tensor gt(tshape);
                              const std::size_t m = g.cols();
                              for (std::size_t i = 0; i < idv.size(); ++i)
                                for (std::size_t j = 0; j < m; ++j)
                                  gt(static_cast<std::size_t>(idv[i]), j) += g(i, j);
                              t.AccumulateGrad(it, std::move(gt));
                            });
}

inline Var SliceCols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  kernels::RequireMatrix(x, "slice_cols");
  if (begin > end || end > x.cols()) {
    Fail(ErrorKind::kDimension, "slice [", begin, ",", end, ") outside ", ShapeString(x.shape()));
  }
  Tensor out = Tensor::Zeros(x.rows(), end - begin);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = x(i, j);
  const auto ia = a.id;
  const Shape xs = x.shape();
  return a.tape->Record(std::move(out), {a}, [ia, xs, begin](Tape& t, const Tensor& g) {
    Tensor ga(xs);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) ga(i, begin + j) = g(i, j);
    t.AccumulateGrad(ia, std::move(ga));
  });
}

inline Var ConcatCols(const std::vector<Var>& parts) {
  if (parts.empty()) Fail(ErrorKind::kDimension, "concat of zero tensors");
  Tape* tape = parts.front().tape;
  const std::size_t n = parts.front().value().rows();
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  std::vector<std::uint32_t> ids;
  for (const Var& p : parts) {
    detail::SameTape(parts.front(), p);
    if (p.value().rows() != n) Fail(ErrorKind::kDimension, "concat_cols row mismatch");
    offsets.push_back(total);
    ids.push_back(p.id);
    total += p.value().cols();
  }
  Tensor out = Tensor::Zeros(n, total);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& x = parts[k].value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) out(i, offsets[k] + j) = x(i, j);
  }
  std::vector<std::size_t> widths;
  for (const Var& p : parts) widths.push_back(p.value().cols());
  return tape->Record(std::move(out), parts,
                      [ids, offsets, widths](Tape& t, const Tensor& g) {
                        for (std::size_t k = 0; k < ids.size(); ++k) {
                          if (!t.requires_grad(ids[k])) continue;
                          Tensor gk = Tensor::Zeros(g.rows(), widths[k]);
                          for (std::size_t i = 0; i < g.rows(); ++i)
                            for (std::size_t j = 0; j < widths[k]; ++j)
                              gk(i, j) = g(i, offsets[k] + j);
                          t.AccumulateGrad(ids[k], std::move(gk));
                        }
                      });
}

/// Multiplies column j of `a` by the constant c[j] (broadcast over rows).
inline Var ScaleCols(Var a, std::span<const double> c) {
  const Tensor& x = a.value();
  kernels::RequireMatrix(x, "scale_cols");
  if (c.size() != x.cols()) {
    Fail(ErrorKind::kDimension, "column scale of length ", c.size(), " does not match ",
         ShapeString(x.shape()));
  }
  Tensor out = x;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) *= c[j];
  const auto ia = a.id;
  std::vector<double> cv(c.begin(), c.end());
  return a.tape->Record(std::move(out), {a}, [ia, cv = std::move(cv)](Tape& t, const Tensor& g) {
    Tensor ga = g;
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) *= cv[j];
    t.AccumulateGrad(ia, std::move(ga));
  });
}

/// Divides each row by its sum; all-zero rows stay zero.
inline Var NormalizeRows(Var a) {
  const Tensor& x = a.value();
  kernels::RequireMatrix(x, "normalize_rows");
  Tensor out = x;
  std::vector<double> sums(x.rows(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) sums[i] += x(i, j);
    if (sums[i] != 0.0)
      for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) /= sums[i];
  }
  const auto ia = a.id;
  const std::uint32_t self = static_cast<std::uint32_t>(a.tape->size());
  return a.tape->Record(std::move(out), {a},
                        [ia, self, sums = std::move(sums)](Tape& t, const Tensor& g) {
                          const Tensor& y = t.value(self);
                          Tensor ga = g;
                          for (std::size_t i = 0; i < g.rows(); ++i) {
                            if (sums[i] == 0.0) continue;
                            double dot = 0.0;
                            for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * y(i, j);
                            for (std::size_t j = 0; j < g.cols(); ++j)
                              ga(i, j) = (g(i, j) - dot) / sums[i];
                          }
                          t.AccumulateGrad(ia, std::move(ga));
                        });
}

inline Var Sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const auto ia = a.id;
  const Shape xs = a.value().shape();
  return a.tape->Record(Tensor::Scalar(s), {a}, [ia, xs](Tape& t, const Tensor& g) {
    t.AccumulateGrad(ia, Tensor(xs, g.item()));
  });
}

inline Var Mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) Fail(ErrorKind::kDimension, "mean of empty tensor");
  return Scale(Sum(a), 1.0 / static_cast<double>(n));
}

}  // namespace ops
}  // namespace confbt
