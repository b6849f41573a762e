// Copyright 2026 The glyphemb Authors. Apache 2.0 License.
//
// Reverse-mode differentiation over an explicit tape.
//
// A Tape<T> owns every intermediate produced during one training step. Ops
// append a node holding the forward value and a closure that pushes the
// node's gradient back into its inputs. Because a node can only reference
// nodes that already exist, the node vector is in topological order and
// backward() is a single reverse sweep. Parameters are bound to the tape
// through Tape::parameter(); after backward() their gradients are added to
// Parameter::grad, so a parameter used on several paths (or bound twice)
// accumulates the sum of all path gradients.
//
// A tape is single-use and must not be shared between threads.

#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "glyphemb/tensor.hpp"

namespace glyphemb {

/// Handle to a node on a Tape.
struct Var {
  std::size_t index = 0;
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor<T>& out_grad)>;

  Tape() = default;
  /// With record_grads=false parameters bind as constants and no backward
  /// closures are kept (evaluation mode).
  explicit Tape(bool record_grads) : record_grads_(record_grads) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A leaf that never receives a gradient.
  Var constant(Tensor<T> value) { return push(std::move(value), false, {}); }

  /// A leaf that receives a gradient, readable through grad() after backward.
  Var variable(Tensor<T> value) { return push(std::move(value), true, {}); }

  /// Binds a parameter; its gradient is accumulated into p.grad on backward.
  Var parameter(Parameter<T>& p) {
    if (!record_grads_) return push(p.value, false, {});
    Var v = push(p.value, true, {});
    nodes_[v.index].param = &p;
    return v;
  }

  bool records_grads() const { return record_grads_; }

  /// Appends an op result. `inputs` decide whether the node needs a gradient.
  Var record(Tensor<T> value, std::initializer_list<Var> inputs,
             Backward backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(),
                                                         inputs.size()),
                  std::move(backward));
  }

  Var record(Tensor<T> value, std::span<const Var> inputs, Backward backward) {
    if (!value.all_finite()) {
      throw NonFiniteError("non-finite value produced by op at tape position " +
                           std::to_string(nodes_.size()));
    }
    bool needs = false;
    for (Var in : inputs) needs = needs || nodes_.at(in.index).requires_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
  }

  const Tensor<T>& value(Var v) const { return nodes_.at(v.index).value; }
  const Shape& shape(Var v) const { return value(v).shape(); }
  bool requires_grad(Var v) const { return nodes_.at(v.index).requires_grad; }

  /// Gradient of the last backward() w.r.t. v (zeros if v was unreachable).
  const Tensor<T>& grad(Var v) {
    return grad_buffer(v);
  }

  /// Adds `fn(buffer)` into v's gradient when v participates in differentiation.
  template <typename Fn>
  void accumulate(Var v, Fn&& fn) {
    if (!nodes_[v.index].requires_grad) return;
    fn(grad_buffer(v));
  }

  std::size_t size() const { return nodes_.size(); }

  void backward(Var loss) {
    Node& root = nodes_.at(loss.index);
    if (root.value.size() != 1) {
      throw ShapeError("backward() requires a scalar loss, got shape " +
                       shape_string(root.value.shape()));
    }
    grad_buffer(loss)[0] = T{1};
    for (std::size_t i = loss.index + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) {
        // The closure may append to other nodes' grads but never to its own.
        n.backward(*this, n.grad);
      }
      if (n.param != nullptr) {
        auto dst = n.param->grad.data();
        auto src = n.grad.data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
    Backward backward;
  };

  Var push(Tensor<T> value, bool requires_grad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  Tensor<T>& grad_buffer(Var v) {
    Node& n = nodes_.at(v.index);
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  std::vector<Node> nodes_;
  bool record_grads_ = true;
};

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

namespace detail {

inline void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw ShapeError(std::string(op) + ": " + what);
}

template <typename T>
void require_matrix(const Tape<T>& tape, Var v, const char* op) {
  require(tape.value(v).rank() == 2, op,
          "expected a matrix, got " + shape_string(tape.shape(v)));
}

template <typename T>
void require_same_shape(const Tape<T>& tape, Var a, Var b, const char* op) {
  require(tape.shape(a) == tape.shape(b), op,
          "shape mismatch " + shape_string(tape.shape(a)) + " vs " +
              shape_string(tape.shape(b)));
}

// C[m x n] += A[m x k] * B[k x n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* a,
             const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T{0}) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x k] += A[m x n] * B[k x n]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a,
             const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    T* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T acc{0};
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* a,
             const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T{0}) continue;
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T{0}) {
    const T e = std::exp(-x);
    return T{1} / (T{1} + e);
  }
  const T e = std::exp(x);
  return e / (T{1} + e);
}

}  // namespace detail

/// a[m x k] * b[k x n]
template <typename T>
Var matmul(Tape<T>& tape, Var a, Var b) {
  detail::require_matrix(tape, a, "matmul");
  detail::require_matrix(tape, b, "matmul");
  const std::size_t m = tape.value(a).dim(0), k = tape.value(a).dim(1);
  const std::size_t n = tape.value(b).dim(1);
  detail::require(tape.value(b).dim(0) == k, "matmul",
                  "inner dimensions differ: " + shape_string(tape.shape(a)) +
                      " * " + shape_string(tape.shape(b)));
  Tensor<T> out({m, n});
  detail::gemm_nn(m, k, n, tape.value(a).data().data(),
                  tape.value(b).data().data(), out.data().data());
  return tape.record(std::move(out), {a, b},
                     [a, b, m, k, n](Tape<T>& t, const Tensor<T>& g) {
                       t.accumulate(a, [&](Tensor<T>& ga) {
                         detail::gemm_nt(m, n, k, g.data().data(),
                                         t.value(b).data().data(),
                                         ga.data().data());
                       });
                       t.accumulate(b, [&](Tensor<T>& gb) {
                         detail::gemm_tn(m, k, n, t.value(a).data().data(),
                                         g.data().data(), gb.data().data());
                       });
                     });
}

/// Adds b[n] to every length-n slice along the last axis of x.
template <typename T>
Var add_bias(Tape<T>& tape, Var x, Var b) {
  const auto& xv = tape.value(x);
  const auto& bv = tape.value(b);
  detail::require(bv.rank() == 1 && xv.shape().back() == bv.size(), "add_bias",
                  "bias " + shape_string(bv.shape()) + " does not match " +
                      shape_string(xv.shape()));
  const std::size_t n = bv.size(), rows = xv.size() / n;
  Tensor<T> out = xv;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] += bv[j];
  return tape.record(std::move(out), {x, b},
                     [x, b, n, rows](Tape<T>& t, const Tensor<T>& g) {
                       t.accumulate(x, [&](Tensor<T>& gx) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           gx[i] += g[i];
                       });
                       t.accumulate(b, [&](Tensor<T>& gb) {
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t j = 0; j < n; ++j)
                             gb[j] += g[r * n + j];
                       });
                     });
}

/// Fully connected layer: x[B x I] * W[I x O] + b[O].
template <typename T>
Var dense(Tape<T>& tape, Var x, Var w, Var b) {
  detail::require_matrix(tape, x, "dense");
  detail::require_matrix(tape, w, "dense");
  detail::require(tape.value(x).dim(1) == tape.value(w).dim(0), "dense",
                  "input width " + std::to_string(tape.value(x).dim(1)) +
                      " does not match weights " + shape_string(tape.shape(w)));
  detail::require(tape.value(b).rank() == 1 &&
                      tape.value(b).size() == tape.value(w).dim(1),
                  "dense", "bias does not match weights");
  return add_bias(tape, matmul(tape, x, w), b);
}

namespace detail {

template <typename T, typename Fwd, typename Bwd>
Var binary_elementwise(Tape<T>& tape, Var a, Var b, const char* name, Fwd fwd,
                       Bwd bwd) {
  require_same_shape(tape, a, b, name);
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  return tape.record(std::move(out), {a, b},
                     [a, b, bwd](Tape<T>& t, const Tensor<T>& g) {
                       const auto& av2 = t.value(a);
                       const auto& bv2 = t.value(b);
                       t.accumulate(a, [&](Tensor<T>& ga) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           ga[i] += g[i] * bwd(av2[i], bv2[i]).first;
                       });
                       t.accumulate(b, [&](Tensor<T>& gb) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           gb[i] += g[i] * bwd(av2[i], bv2[i]).second;
                       });
                     });
}

}  // namespace detail

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  return detail::binary_elementwise(
      tape, a, b, "add", [](T x, T y) { return x + y; },
      [](T, T) { return std::pair<T, T>{T{1}, T{1}}; });
}

template <typename T>
Var sub(Tape<T>& tape, Var a, Var b) {
  return detail::binary_elementwise(
      tape, a, b, "sub", [](T x, T y) { return x - y; },
      [](T, T) { return std::pair<T, T>{T{1}, T{-1}}; });
}

/// Hadamard product.
template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
  return detail::binary_elementwise(
      tape, a, b, "mul", [](T x, T y) { return x * y; },
      [](T x, T y) { return std::pair<T, T>{y, x}; });
}

/// scale * x + shift, elementwise.
template <typename T>
Var affine(Tape<T>& tape, Var x, T scale, T shift) {
  Tensor<T> out = tape.value(x);
  for (auto& v : out.data()) v = scale * v + shift;
  return tape.record(std::move(out), {x},
                     [x, scale](Tape<T>& t, const Tensor<T>& g) {
                       t.accumulate(x, [&](Tensor<T>& gx) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           gx[i] += scale * g[i];
                       });
                     });
}

enum class Activation { relu, sigmoid, tanh };

/// Applies an activation per element. The relu subgradient at 0 is 0.
template <typename T>
Var elementwise(Tape<T>& tape, Var x, Activation fn) {
  Tensor<T> out = tape.value(x);
  for (auto& v : out.data()) {
    switch (fn) {
      case Activation::relu: v = v > T{0} ? v : T{0}; break;
      case Activation::sigmoid: v = detail::stable_sigmoid(v); break;
      case Activation::tanh: v = std::tanh(v); break;
    }
  }
  return tape.record(std::move(out), {x},
                     [x, fn](Tape<T>& t, const Tensor<T>& g) {
                       const auto& xv = t.value(x);
                       t.accumulate(x, [&](Tensor<T>& gx) {
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           const T in = xv[i];
                           T d{0};
                           switch (fn) {
                             case Activation::relu:
                               d = in > T{0} ? T{1} : T{0};
                               break;
                             case Activation::sigmoid: {
                               const T s = detail::stable_sigmoid(in);
                               d = s * (T{1} - s);
                               break;
                             }
                             case Activation::tanh: {
                               const T th = std::tanh(in);
                               d = T{1} - th * th;
                               break;
                             }
                           }
                           gx[i] += g[i] * d;
                         }
                       });
                     });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) { return elementwise(tape, x, Activation::relu); }
template <typename T>
Var sigmoid(Tape<T>& tape, Var x) {
  return elementwise(tape, x, Activation::sigmoid);
}
template <typename T>
Var tanh(Tape<T>& tape, Var x) { return elementwise(tape, x, Activation::tanh); }

/// Columns [begin, begin + count) of a matrix.
template <typename T>
Var slice_cols(Tape<T>& tape, Var x, std::size_t begin, std::size_t count) {
  detail::require_matrix(tape, x, "slice_cols");
  const std::size_t rows = tape.value(x).dim(0), cols = tape.value(x).dim(1);
  detail::require(count > 0 && begin + count <= cols, "slice_cols",
                  "column range out of bounds");
  Tensor<T> out({rows, count});
  const auto& xv = tape.value(x);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < count; ++j)
      out.at(r, j) = xv.at(r, begin + j);
  return tape.record(std::move(out), {x},
                     [x, begin, count, rows, cols](Tape<T>& t,
                                                   const Tensor<T>& g) {
                       t.accumulate(x, [&](Tensor<T>& gx) {
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t j = 0; j < count; ++j)
                             gx[r * cols + begin + j] += g[r * count + j];
                       });
                     });
}

/// [a | b] for matrices with equal row counts.
template <typename T>
Var concat_cols(Tape<T>& tape, Var a, Var b) {
  detail::require_matrix(tape, a, "concat_cols");
  detail::require_matrix(tape, b, "concat_cols");
  const std::size_t rows = tape.value(a).dim(0);
  detail::require(tape.value(b).dim(0) == rows, "concat_cols",
                  "row counts differ");
  const std::size_t ca = tape.value(a).dim(1), cb = tape.value(b).dim(1);
  Tensor<T> out({rows, ca + cb});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(tape.value(a).row(r).begin(), ca, out.row(r).begin());
    std::copy_n(tape.value(b).row(r).begin(), cb, out.row(r).begin() + ca);
  }
  return tape.record(std::move(out), {a, b},
                     [a, b, rows, ca, cb](Tape<T>& t, const Tensor<T>& g) {
                       t.accumulate(a, [&](Tensor<T>& ga) {
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t j = 0; j < ca; ++j)
                             ga[r * ca + j] += g[r * (ca + cb) + j];
                       });
                       t.accumulate(b, [&](Tensor<T>& gb) {
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t j = 0; j < cb; ++j)
                             gb[r * cb + j] += g[r * (ca + cb) + ca + j];
                       });
                     });
}

/// Stacks matrices with equal widths on top of each other.
template <typename T>
Var concat_rows(Tape<T>& tape, std::span<const Var> parts) {
  detail::require(!parts.empty(), "concat_rows", "no inputs");
  const std::size_t width = tape.value(parts[0]).shape().back();
  std::size_t rows = 0;
  std::vector<std::size_t> offsets;
  for (Var p : parts) {
    detail::require_matrix(tape, p, "concat_rows");
    detail::require(tape.value(p).dim(1) == width, "concat_rows",
                    "widths differ");
    offsets.push_back(rows);
    rows += tape.value(p).dim(0);
  }
  Tensor<T> out({rows, width});
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto src = tape.value(parts[i]).data();
    std::copy(src.begin(), src.end(), out.data().begin() + offsets[i] * width);
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(
      std::move(out), std::span<const Var>(inputs),
      [inputs, offsets, width](Tape<T>& t, const Tensor<T>& g) {
        for (std::size_t i = 0; i < inputs.size(); ++i) {
          t.accumulate(inputs[i], [&](Tensor<T>& gp) {
            const std::size_t base = offsets[i] * width;
            for (std::size_t k = 0; k < gp.size(); ++k) gp[k] += g[base + k];
          });
        }
      });
}

/// Selects rows of a matrix by index; rows may repeat.
template <typename T>
Var gather_rows(Tape<T>& tape, Var table, std::span<const std::size_t> ids) {
  detail::require_matrix(tape, table, "gather_rows");
  detail::require(!ids.empty(), "gather_rows", "no indices");
  const std::size_t n = tape.value(table).dim(0),
                    k = tape.value(table).dim(1);
  Tensor<T> out({ids.size(), k});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= n) {
      throw std::out_of_range("gather_rows: index " + std::to_string(ids[r]) +
                              " outside table of " + std::to_string(n) +
                              " rows");
    }
    const auto src = tape.value(table).row(ids[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return tape.record(std::move(out), {table},
                     [table, idx, k](Tape<T>& t, const Tensor<T>& g) {
                       t.accumulate(table, [&](Tensor<T>& gt) {
                         for (std::size_t r = 0; r < idx.size(); ++r)
                           for (std::size_t j = 0; j < k; ++j)
                             gt[idx[r] * k + j] += g[r * k + j];
                       });
                     });
}

template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape) {
  detail::require(shape_size(shape) == tape.value(x).size(), "reshape",
                  shape_string(tape.shape(x)) + " -> " + shape_string(shape));
  Tensor<T> out = tape.value(x).reshaped(std::move(shape));
  return tape.record(std::move(out), {x},
                     [x](Tape<T>& t, const Tensor<T>& g) {
                       t.accumulate(x, [&](Tensor<T>& gx) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           gx[i] += g[i];
                       });
                     });
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
  T acc{0};
  for (T v : tape.value(x).data()) acc += v;
  return tape.record(Tensor<T>({1}, {acc}), {x},
                     [x](Tape<T>& t, const Tensor<T>& g) {
                       t.accumulate(x, [&](Tensor<T>& gx) {
                         for (auto& v : gx.data()) v += g[0];
                       });
                     });
}

/// Row-wise blend for padded recurrences: out = mask ? fresh : prev.
/// `mask` holds one 0/1 entry per row.
template <typename T>
Var masked_blend(Tape<T>& tape, Var fresh, Var prev,
                 std::span<const std::uint8_t> mask) {
  detail::require_same_shape(tape, fresh, prev, "masked_blend");
  detail::require_matrix(tape, fresh, "masked_blend");
  const std::size_t rows = tape.value(fresh).dim(0),
                    cols = tape.value(fresh).dim(1);
  detail::require(mask.size() == rows, "masked_blend", "mask length mismatch");
  Tensor<T> out({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    const auto src = mask[r] ? tape.value(fresh).row(r) : tape.value(prev).row(r);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  return tape.record(std::move(out), {fresh, prev},
                     [fresh, prev, m, cols](Tape<T>& t, const Tensor<T>& g) {
                       t.accumulate(fresh, [&](Tensor<T>& gf) {
                         for (std::size_t r = 0; r < m.size(); ++r)
                           if (m[r])
                             for (std::size_t j = 0; j < cols; ++j)
                               gf[r * cols + j] += g[r * cols + j];
                       });
                       t.accumulate(prev, [&](Tensor<T>& gp) {
                         for (std::size_t r = 0; r < m.size(); ++r)
                           if (!m[r])
                             for (std::size_t j = 0; j < cols; ++j)
                               gp[r * cols + j] += g[r * cols + j];
                       });
                     });
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

enum class Padding { same, valid };

struct ConvGeometry {
  std::size_t out = 0;
  std::size_t pad_before = 0;
};

/// Output size and leading pad along one axis. Same padding yields
/// ceil(in / stride) outputs with the extra pad placed after the input.
inline ConvGeometry conv_geometry(std::size_t in, std::size_t kernel,
                                  std::size_t stride, Padding padding) {
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (kernel == 0) throw ShapeError("conv2d: kernel must be positive");
  if (padding == Padding::valid) {
    if (kernel > in) {
      throw ShapeError("conv2d: kernel " + std::to_string(kernel) +
                       " larger than input " + std::to_string(in));
    }
    return {(in - kernel) / stride + 1, 0};
  }
  const std::size_t out = (in + stride - 1) / stride;
  const std::size_t needed = (out - 1) * stride + kernel;
  const std::size_t total = needed > in ? needed - in : 0;
  if (kernel > in + total) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
  return {out, total / 2};
}

/// Cross-correlation of x[B x H x W x Cin] with filters[kh x kw x Cin x Cout].
template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var filters, std::size_t stride_h,
           std::size_t stride_w, Padding padding) {
  const auto& xv = tape.value(x);
  const auto& fv = tape.value(filters);
  detail::require(xv.rank() == 4, "conv2d",
                  "input must be BxHxWxC, got " + shape_string(xv.shape()));
  detail::require(fv.rank() == 4, "conv2d",
                  "filters must be khxkwxCinxCout, got " +
                      shape_string(fv.shape()));
  const std::size_t batch = xv.dim(0), h = xv.dim(1), w = xv.dim(2),
                    cin = xv.dim(3);
  const std::size_t kh = fv.dim(0), kw = fv.dim(1), cout = fv.dim(3);
  detail::require(fv.dim(2) == cin, "conv2d", "input channel mismatch");
  const auto gy = conv_geometry(h, kh, stride_h, padding);
  const auto gx = conv_geometry(w, kw, stride_w, padding);
  const std::size_t oh = gy.out, ow = gx.out;

  // Visits every (output position, kernel tap) pair that lands inside the
  // input, passing flat offsets into x, filters (at cin=0, cout=0) and out.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const std::size_t obase = ((b * oh + oy) * ow + ox) * cout;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride_h + ky) -
                                      static_cast<std::ptrdiff_t>(gy.pad_before);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * stride_w + kx) -
                  static_cast<std::ptrdiff_t>(gx.pad_before);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              const std::size_t xbase =
                  ((b * h + static_cast<std::size_t>(iy)) * w +
                   static_cast<std::size_t>(ix)) * cin;
              const std::size_t fbase = (ky * kw + kx) * cin * cout;
              fn(xbase, fbase, obase);
            }
          }
        }
  };

  Tensor<T> out({batch, oh, ow, cout});
  {
    const T* xp = xv.data().data();
    const T* fp = fv.data().data();
    T* op = out.data().data();
    for_each_tap([&](std::size_t xb, std::size_t fb, std::size_t ob) {
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const T xval = xp[xb + ci];
        if (xval == T{0}) continue;
        const T* frow = fp + fb + ci * cout;
        T* orow = op + ob;
        for (std::size_t co = 0; co < cout; ++co) orow[co] += xval * frow[co];
      }
    });
  }
  return tape.record(
      std::move(out), {x, filters},
      [x, filters, for_each_tap, cin, cout](Tape<T>& t, const Tensor<T>& g) {
        const T* gp = g.data().data();
        t.accumulate(x, [&](Tensor<T>& gxs) {
          const T* fp = t.value(filters).data().data();
          T* gxp = gxs.data().data();
          for_each_tap([&](std::size_t xb, std::size_t fb, std::size_t ob) {
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const T* frow = fp + fb + ci * cout;
              const T* grow = gp + ob;
              T acc{0};
              for (std::size_t co = 0; co < cout; ++co) acc += frow[co] * grow[co];
              gxp[xb + ci] += acc;
            }
          });
        });
        t.accumulate(filters, [&](Tensor<T>& gfs) {
          const T* xp = t.value(x).data().data();
          T* gfp = gfs.data().data();
          for_each_tap([&](std::size_t xb, std::size_t fb, std::size_t ob) {
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const T xval = xp[xb + ci];
              if (xval == T{0}) continue;
              T* gfrow = gfp + fb + ci * cout;
              const T* grow = gp + ob;
              for (std::size_t co = 0; co < cout; ++co) gfrow[co] += xval * grow[co];
            }
          });
        });
      });
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Mean over unmasked rows of -log softmax(logits)[target].
template <typename T>
Var softmax_cross_entropy(Tape<T>& tape, Var logits,
                          std::span<const std::size_t> targets,
                          std::span<const std::uint8_t> mask) {
  detail::require_matrix(tape, logits, "softmax_cross_entropy");
  const std::size_t rows = tape.value(logits).dim(0),
                    classes = tape.value(logits).dim(1);
  detail::require(targets.size() == rows && mask.size() == rows,
                  "softmax_cross_entropy", "targets/mask length mismatch");
  std::size_t active = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    ++active;
    if (targets[r] >= classes) {
      throw std::out_of_range("softmax_cross_entropy: target " +
                              std::to_string(targets[r]) + " outside [0, " +
                              std::to_string(classes) + ")");
    }
  }
  if (active == 0) {
    throw std::invalid_argument(
        "softmax_cross_entropy: every position is masked");
  }
  const auto& lv = tape.value(logits);
  Tensor<T> probs({rows, classes});
  T total{0};
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    const auto row = lv.row(r);
    const T mx = *std::max_element(row.begin(), row.end());
    T z{0};
    for (std::size_t j = 0; j < classes; ++j) {
      probs.at(r, j) = std::exp(row[j] - mx);
      z += probs.at(r, j);
    }
    for (std::size_t j = 0; j < classes; ++j) probs.at(r, j) /= z;
    total += -(row[targets[r]] - mx - std::log(z));
  }
  const T scale = T{1} / static_cast<T>(active);
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  return tape.record(
      Tensor<T>({1}, {total * scale}), {logits},
      [logits, probs = std::move(probs), tgt, m, scale, classes](
          Tape<T>& t, const Tensor<T>& g) {
        t.accumulate(logits, [&](Tensor<T>& gl) {
          for (std::size_t r = 0; r < m.size(); ++r) {
            if (!m[r]) continue;
            for (std::size_t j = 0; j < classes; ++j) {
              const T d = probs.at(r, j) - (j == tgt[r] ? T{1} : T{0});
              gl.at(r, j) += g[0] * scale * d;
            }
          }
        });
      });
}

/// Mean over unmasked entries of the binary cross-entropy between
/// sigmoid(logits) and 0/1 targets. `logits` may have any shape with one
/// entry per target.
template <typename T>
Var sigmoid_binary_cross_entropy(Tape<T>& tape, Var logits,
                                 std::span<const std::uint8_t> targets,
                                 std::span<const std::uint8_t> mask) {
  const auto& lv = tape.value(logits);
  detail::require(targets.size() == lv.size() && mask.size() == lv.size(),
                  "sigmoid_binary_cross_entropy",
                  "targets/mask length mismatch");
  std::size_t active = 0;
  T total{0};
  for (std::size_t i = 0; i < lv.size(); ++i) {
    if (!mask[i]) continue;
    ++active;
    const T x = lv[i];
    const T y = targets[i] ? T{1} : T{0};
    // max(x,0) - x*y + log(1 + exp(-|x|))
    total += std::max(x, T{0}) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  if (active == 0) {
    throw std::invalid_argument(
        "sigmoid_binary_cross_entropy: every position is masked");
  }
  const T scale = T{1} / static_cast<T>(active);
  std::vector<std::uint8_t> tgt(targets.begin(), targets.end());
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  return tape.record(Tensor<T>({1}, {total * scale}), {logits},
                     [logits, tgt, m, scale](Tape<T>& t, const Tensor<T>& g) {
                       const auto& lv2 = t.value(logits);
                       t.accumulate(logits, [&](Tensor<T>& gl) {
                         for (std::size_t i = 0; i < m.size(); ++i) {
                           if (!m[i]) continue;
                           const T p = detail::stable_sigmoid(lv2[i]);
                           gl[i] += g[0] * scale * (p - (tgt[i] ? T{1} : T{0}));
                         }
                       });
                     });
}

/// Row-wise log-softmax of a plain matrix (evaluation helper, no tape).
template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& logits) {
  Tensor<T> out = logits;
  const std::size_t cols = logits.shape().back();
  for (std::size_t r = 0; r < logits.size() / cols; ++r) {
    auto row = out.row(r);
    const T mx = *std::max_element(row.begin(), row.end());
    T z{0};
    for (T v : row) z += std::exp(v - mx);
    const T lz = mx + std::log(z);
    for (auto& v : row) v -= lz;
  }
  return out;
}

}  // namespace glyphemb
