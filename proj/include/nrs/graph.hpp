#pragma once

#include <cmath>
#include <compare>
#include <deque>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "nrs/error.hpp"
#include "nrs/tensor.hpp"

namespace nrs {

/// Handle to a node of a Graph. Only meaningful for the graph that produced it.
struct Var {
  std::size_t id = 0;
  friend auto operator<=>(const Var&, const Var&) = default;
};

using Gradients = std::map<Var, Tensor>;

/// Append-only tape for reverse-mode differentiation.
///
/// Every operation evaluates eagerly and records (op, inputs, value). Inputs
/// always precede their consumers, so the tape is acyclic and backward() is a
/// single sweep in reverse id order. Two parameter copies (theta and
/// theta + delta) can live on the same tape as long as the second is derived
/// from the first through add().
class Graph {
 public:
  enum class Op : std::uint8_t {
    Parameter,
    Constant,
    MatMul,
    AddRowBias,
    Add,
    Sub,
    Mul,
    Scale,
    Relu,
    Tanh,
    Exp,
    ClampMin,
    LogSoftmax,
    Sum,
    Slice,
  };

  Var parameter(Tensor value) {
    Var v = push(Op::Parameter, {}, std::move(value));
    params_.push_back(v);
    return v;
  }

  Var constant(Tensor value) { return push(Op::Constant, {}, std::move(value)); }

  Var matmul(Var a, Var b) { return push(Op::MatMul, {a, b}, nrs::matmul(value(a), value(b))); }

  /// x[B x n] + bias[n] broadcast over rows.
  Var add_row_bias(Var x, Var bias) {
    const Tensor& X = value(x);
    const Tensor& b = value(bias);
    require_matrix(X, "add_row_bias");
    if (b.size() != X.cols())
      throw DimensionError("add_row_bias: bias " + shape_string(b.shape()) + " does not match rows of " +
                           shape_string(X.shape()));
    Tensor out = X;
    const std::size_t n = X.cols();
    for (std::size_t r = 0; r < X.rows(); ++r)
      for (std::size_t j = 0; j < n; ++j) out[r * n + j] += b[j];
    return push(Op::AddRowBias, {x, bias}, std::move(out));
  }

  Var add(Var a, Var b) { return push(Op::Add, {a, b}, zip(a, b, "add", [](double x, double y) { return x + y; })); }
  Var sub(Var a, Var b) { return push(Op::Sub, {a, b}, zip(a, b, "sub", [](double x, double y) { return x - y; })); }
  Var mul(Var a, Var b) { return push(Op::Mul, {a, b}, zip(a, b, "mul", [](double x, double y) { return x * y; })); }

  Var scale(Var a, double c) {
    Tensor out = value(a);
    for (double& v : out.data()) v *= c;
    return push(Op::Scale, {a}, std::move(out), c);
  }

  Var relu(Var a) {
    Tensor out = value(a);
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return push(Op::Relu, {a}, std::move(out));
  }

  Var tanh(Var a) {
    Tensor out = value(a);
    for (double& v : out.data()) v = std::tanh(v);
    return push(Op::Tanh, {a}, std::move(out));
  }

  Var exp(Var a) {
    Tensor out = value(a);
    for (double& v : out.data()) v = std::exp(v);
    if (!out.all_finite()) throw NumericError("exp overflowed");
    return push(Op::Exp, {a}, std::move(out));
  }

  /// max(a, floor) elementwise; gradient passes only where a > floor.
  Var clamp_min(Var a, double floor) {
    Tensor out = value(a);
    for (double& v : out.data()) v = v > floor ? v : floor;
    return push(Op::ClampMin, {a}, std::move(out), floor);
  }

  Var log_softmax(Var logits) { return push(Op::LogSoftmax, {logits}, nrs::log_softmax(value(logits))); }

  Var sum(Var a) {
    double s = 0.0;
    for (double v : value(a).data()) s += v;
    return push(Op::Sum, {a}, Tensor::scalar(s));
  }

  /// View `shape` elements of `flat` starting at `offset` as a new tensor.
  Var slice(Var flat, std::size_t offset, Shape shape) {
    const Tensor& src = value(flat);
    const std::size_t n = shape_size(shape);
    if (offset + n > src.size())
      throw DimensionError("slice [" + std::to_string(offset) + ", " + std::to_string(offset + n) +
                           ") exceeds source of size " + std::to_string(src.size()));
    std::vector<double> data(src.data().begin() + static_cast<std::ptrdiff_t>(offset),
                             src.data().begin() + static_cast<std::ptrdiff_t>(offset + n));
    Node node{Op::Slice, {flat}, Tensor(std::move(shape), std::move(data)), 0.0, offset};
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
  }

  const Tensor& value(Var v) const {
    check(v);
    return nodes_[v.id].value;
  }

  double scalar(Var v) const {
    const Tensor& t = value(v);
    if (!t.is_scalar()) throw ContractError("node " + std::to_string(v.id) + " is not a scalar");
    return t[0];
  }

  Op op(Var v) const {
    check(v);
    return nodes_[v.id].op;
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<Var>& parameters() const noexcept { return params_; }

  /// d(loss)/d(p) for every parameter p; parameters the loss does not depend
  /// on get zero tensors.
  Gradients backward(Var loss) const {
    check(loss);
    if (!nodes_[loss.id].value.is_scalar())
      throw ContractError("backward needs a scalar loss, node " + std::to_string(loss.id) + " has shape " +
                          shape_string(nodes_[loss.id].value.shape()));

    std::vector<Tensor> adj(nodes_.size());
    adj[loss.id] = Tensor::scalar(1.0);

    for (std::size_t i = loss.id + 1; i-- > 0;) {
      if (adj[i].size() == 0) continue;
      const Node& n = nodes_[i];
      const Tensor& g = adj[i];
      switch (n.op) {
        case Op::Parameter:
        case Op::Constant:
          break;
        case Op::MatMul: {
          const Tensor& A = nodes_[n.in[0].id].value;
          const Tensor& B = nodes_[n.in[1].id].value;
          const std::size_t m = A.rows(), k = A.cols(), p = B.cols();
          Tensor& dA = grad_slot(adj, n.in[0]);
          Tensor& dB = grad_slot(adj, n.in[1]);
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < p; ++c) {
              const double gv = g[r * p + c];
              if (gv == 0.0) continue;
              for (std::size_t t = 0; t < k; ++t) {
                dA[r * k + t] += gv * B[t * p + c];
                dB[t * p + c] += gv * A[r * k + t];
              }
            }
          break;
        }
        case Op::AddRowBias: {
          const std::size_t cols = n.value.cols();
          accumulate(grad_slot(adj, n.in[0]), g);
          Tensor& db = grad_slot(adj, n.in[1]);
          for (std::size_t r = 0; r < n.value.rows(); ++r)
            for (std::size_t j = 0; j < cols; ++j) db[j] += g[r * cols + j];
          break;
        }
        case Op::Add:
          accumulate(grad_slot(adj, n.in[0]), g);
          accumulate(grad_slot(adj, n.in[1]), g);
          break;
        case Op::Sub: {
          accumulate(grad_slot(adj, n.in[0]), g);
          Tensor& db = grad_slot(adj, n.in[1]);
          for (std::size_t j = 0; j < g.size(); ++j) db[j] -= g[j];
          break;
        }
        case Op::Mul: {
          const Tensor& A = nodes_[n.in[0].id].value;
          const Tensor& B = nodes_[n.in[1].id].value;
          Tensor& dA = grad_slot(adj, n.in[0]);
          for (std::size_t j = 0; j < g.size(); ++j) dA[j] += g[j] * B[j];
          Tensor& dB = grad_slot(adj, n.in[1]);
          for (std::size_t j = 0; j < g.size(); ++j) dB[j] += g[j] * A[j];
          break;
        }
        case Op::Scale: {
          Tensor& dA = grad_slot(adj, n.in[0]);
          for (std::size_t j = 0; j < g.size(); ++j) dA[j] += g[j] * n.constant;
          break;
        }
        case Op::Relu: {
          Tensor& dA = grad_slot(adj, n.in[0]);
          for (std::size_t j = 0; j < g.size(); ++j)
            if (n.value[j] > 0.0) dA[j] += g[j];
          break;
        }
        case Op::Tanh: {
          Tensor& dA = grad_slot(adj, n.in[0]);
          for (std::size_t j = 0; j < g.size(); ++j) dA[j] += g[j] * (1.0 - n.value[j] * n.value[j]);
          break;
        }
        case Op::Exp: {
          Tensor& dA = grad_slot(adj, n.in[0]);
          for (std::size_t j = 0; j < g.size(); ++j) dA[j] += g[j] * n.value[j];
          break;
        }
        case Op::ClampMin: {
          const Tensor& A = nodes_[n.in[0].id].value;
          Tensor& dA = grad_slot(adj, n.in[0]);
          for (std::size_t j = 0; j < g.size(); ++j)
            if (A[j] > n.constant) dA[j] += g[j];
          break;
        }
        case Op::LogSoftmax: {
          // d/dx_j = g_j - softmax_j * sum_k g_k, per row.
          const std::size_t rows = n.value.rows(), K = n.value.cols();
          Tensor& dA = grad_slot(adj, n.in[0]);
          for (std::size_t r = 0; r < rows; ++r) {
            double gs = 0.0;
            for (std::size_t k = 0; k < K; ++k) gs += g[r * K + k];
            for (std::size_t k = 0; k < K; ++k)
              dA[r * K + k] += g[r * K + k] - std::exp(n.value[r * K + k]) * gs;
          }
          break;
        }
        case Op::Sum: {
          Tensor& dA = grad_slot(adj, n.in[0]);
          for (double& v : dA.data()) v += g[0];
          break;
        }
        case Op::Slice: {
          Tensor& dA = grad_slot(adj, n.in[0]);
          for (std::size_t j = 0; j < g.size(); ++j) dA[n.offset + j] += g[j];
          break;
        }
      }
    }

    Gradients out;
    for (Var p : params_) {
      if (p.id <= loss.id && adj[p.id].size() != 0)
        out.emplace(p, std::move(adj[p.id]));
      else
        out.emplace(p, Tensor(nodes_[p.id].value.shape()));
    }
    return out;
  }

 private:
  struct Node {
    Op op;
    std::vector<Var> in;
    Tensor value;
    double constant = 0.0;
    std::size_t offset = 0;
  };

  Var push(Op op, std::vector<Var> in, Tensor value, double constant = 0.0) {
    for (Var v : in) check(v);
    nodes_.push_back(Node{op, std::move(in), std::move(value), constant, 0});
    return Var{nodes_.size() - 1};
  }

  void check(Var v) const {
    if (v.id >= nodes_.size())
      throw ContractError("node id " + std::to_string(v.id) + " does not belong to this graph");
  }

  template <class F>
  Tensor zip(Var a, Var b, const char* name, F f) const {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.shape() != B.shape())
      throw DimensionError(std::string(name) + " shape mismatch: " + shape_string(A.shape()) + " vs " +
                           shape_string(B.shape()));
    Tensor out(A.shape());
    for (std::size_t j = 0; j < A.size(); ++j) out[j] = f(A[j], B[j]);
    return out;
  }

  Tensor& grad_slot(std::vector<Tensor>& adj, Var v) const {
    Tensor& slot = adj[v.id];
    if (slot.size() == 0) slot = Tensor(nodes_[v.id].value.shape());
    return slot;
  }

  static void accumulate(Tensor& dst, const Tensor& src) {
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
  }

  std::deque<Node> nodes_;
  std::vector<Var> params_;
};

}  // namespace nrs
