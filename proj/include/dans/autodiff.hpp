#pragma once
// Reverse-mode differentiation over dense rank<=2 float64 tensors.
//
// A Tape records operations in creation order; backward() walks it in
// reverse. Parameter leaves reference a Tensor owned elsewhere and accumulate
// their gradient into Tensor::grad until zero_grad() is called. Every op
// checks that its output is finite and throws NumericalError otherwise.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dans/error.hpp"

namespace dans {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Index = Eigen::Index;

struct Tensor {
  Matrix value;
  Matrix grad;  // empty until a gradient is accumulated

  Tensor() = default;
  explicit Tensor(Matrix v) : value(std::move(v)) {}

  Index rows() const { return value.rows(); }
  Index cols() const { return value.cols(); }
  bool has_grad() const { return grad.size() != 0; }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Matrix& ensure_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols()) grad.setZero(value.rows(), value.cols());
    return grad;
  }
};

inline std::string shape_str(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

// Stable log(sigmoid(x)).
inline double log_sigmoid(double x) { return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x))); }

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

class Tape {
 public:
  struct Var {
    int id = -1;
  };

  Tape() { nodes_.reserve(64); }

  Var constant(Matrix m) { return push(std::move(m), nullptr, "constant"); }

  Var scalar(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  Var param(Tensor& t) {
    Node node;
    node.param = &t;
    nodes_.push_back(std::move(node));
    return {static_cast<int>(nodes_.size()) - 1};
  }

  const Matrix& value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.param ? n.param->value : n.value;
  }

  double item(Var v) const {
    const Matrix& m = value(v);
    if (m.size() != 1) throw ShapeError("item: expected a 1x1 tensor, got " + shape_str(m));
    return m(0, 0);
  }

  // Gradient of the last backward() target w.r.t. a non-parameter node.
  const Matrix& grad(Var v) const {
    const Node& n = nodes_[v.id];
    return n.param ? n.param->grad : n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (A.cols() != B.rows()) throw ShapeError("matmul: shape mismatch " + shape_str(A) + " vs " + shape_str(B));
    Matrix out = A * B;
    return push(std::move(out), [a, b](Tape& t, const Matrix& g) {
      if (t.needs(a)) t.acc(a).noalias() += g * t.value(b).transpose();
      if (t.needs(b)) t.acc(b).noalias() += t.value(a).transpose() * g;
    }, "matmul");
  }

  // b may have the same shape as a, or be a 1xC row broadcast over rows.
  Var add(Var a, Var b) { return add_sub(a, b, 1.0, "add"); }
  Var sub(Var a, Var b) { return add_sub(a, b, -1.0, "sub"); }

  Var mul(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    same_shape(A, B, "mul");
    Matrix out = A.cwiseProduct(B);
    return push(std::move(out), [a, b](Tape& t, const Matrix& g) {
      if (t.needs(a)) t.acc(a) += g.cwiseProduct(t.value(b));
      if (t.needs(b)) t.acc(b) += g.cwiseProduct(t.value(a));
    }, "mul");
  }

  Var scale(Var a, double s) {
    Matrix out = value(a) * s;
    return push(std::move(out), [a, s](Tape& t, const Matrix& g) { t.acc(a) += g * s; }, "scale");
  }

  Var add_scalar(Var a, double c) {
    Matrix out = value(a).array() + c;
    return push(std::move(out), [a](Tape& t, const Matrix& g) { t.acc(a) += g; }, "add_scalar");
  }

  Var relu(Var a) {
    Matrix out = value(a).cwiseMax(0.0);
    return push(std::move(out), [a](Tape& t, const Matrix& g) {
      t.acc(a) += (t.value(a).array() > 0.0).select(g, 0.0);
    }, "relu");
  }

  Var sigmoid(Var a) {
    Matrix out = value(a).unaryExpr([](double x) { return dans::sigmoid(x); });
    int self = next_id();
    return push(std::move(out), [a, self](Tape& t, const Matrix& g) {
      const Matrix& y = t.nodes_[self].value;
      t.acc(a) += g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
    }, "sigmoid");
  }

  Var log_sigmoid(Var a) {
    Matrix out = value(a).unaryExpr([](double x) { return dans::log_sigmoid(x); });
    return push(std::move(out), [a](Tape& t, const Matrix& g) {
      // d/dx log sigmoid(x) = sigmoid(-x)
      t.acc(a) += g.cwiseProduct(t.value(a).unaryExpr([](double x) { return dans::sigmoid(-x); }));
    }, "log_sigmoid");
  }

  // Row-wise softmax.
  Var softmax(Var a) {
    const Matrix& X = value(a);
    Matrix out(X.rows(), X.cols());
    for (Index i = 0; i < X.rows(); ++i) {
      RowVector e = (X.row(i).array() - X.row(i).maxCoeff()).exp();
      out.row(i) = e / e.sum();
    }
    int self = next_id();
    return push(std::move(out), [a, self](Tape& t, const Matrix& g) {
      const Matrix& y = t.nodes_[self].value;
      Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
      Matrix gx = y.cwiseProduct((g.colwise() - dot));
      t.acc(a) += gx;
    }, "softmax");
  }

  // Normalizes each row over its columns, then applies gain and shift (1xC).
  Var layer_norm(Var x, Var gain, Var shift, double eps = 1e-5) {
    const Matrix& X = value(x);
    const Matrix& G = value(gain);
    const Matrix& B = value(shift);
    if (G.rows() != 1 || G.cols() != X.cols() || B.rows() != 1 || B.cols() != X.cols())
      throw ShapeError("layer_norm: shape mismatch " + shape_str(X) + " vs gain " + shape_str(G) + " shift " +
                       shape_str(B));
    const Index n = X.rows(), c = X.cols();
    Matrix xhat(n, c);
    Eigen::VectorXd inv_std(n);
    for (Index i = 0; i < n; ++i) {
      const double mu = X.row(i).mean();
      const double var = (X.row(i).array() - mu).square().mean();
      inv_std(i) = 1.0 / std::sqrt(var + eps);
      xhat.row(i) = (X.row(i).array() - mu) * inv_std(i);
    }
    Matrix out = (xhat.array().rowwise() * G.row(0).array()).rowwise() + B.row(0).array();
    return push(std::move(out), [x, gain, shift, xhat = std::move(xhat), inv_std](Tape& t, const Matrix& g) {
      const Matrix& G = t.value(gain);
      if (t.needs(gain)) t.acc(gain) += g.cwiseProduct(xhat).colwise().sum();
      if (t.needs(shift)) t.acc(shift) += g.colwise().sum();
      if (t.needs(x)) {
        Matrix gx_hat = g.array().rowwise() * G.row(0).array();
        const double c = static_cast<double>(gx_hat.cols());
        Matrix& acc = t.acc(x);
        for (Index i = 0; i < gx_hat.rows(); ++i) {
          const double m1 = gx_hat.row(i).sum() / c;
          const double m2 = gx_hat.row(i).dot(xhat.row(i)) / c;
          acc.row(i) += inv_std(i) * (gx_hat.row(i).array() - m1 - xhat.row(i).array() * m2).matrix();
        }
      }
    }, "layer_norm");
  }

  // Mean over rows of the squared L2 distance between rows.
  Var mse(Var pred, Var target) {
    const Matrix& P = value(pred);
    const Matrix& T = value(target);
    same_shape(P, T, "mse");
    if (P.rows() == 0) throw ShapeError("mse: empty input");
    Matrix out(1, 1);
    out(0, 0) = (P - T).squaredNorm() / static_cast<double>(P.rows());
    return push(std::move(out), [pred, target](Tape& t, const Matrix& g) {
      const Matrix& P = t.value(pred);
      const Matrix diff = (P - t.value(target)) * (2.0 * g(0, 0) / static_cast<double>(P.rows()));
      if (t.needs(pred)) t.acc(pred) += diff;
      if (t.needs(target)) t.acc(target) -= diff;
    }, "mse");
  }

  Var sum(Var a) {
    Matrix out(1, 1);
    out(0, 0) = value(a).sum();
    return push(std::move(out), [a](Tape& t, const Matrix& g) { t.acc(a).array() += g(0, 0); }, "sum");
  }

  Var mean(Var a) {
    const Matrix& A = value(a);
    if (A.size() == 0) throw ShapeError("mean: empty input");
    Matrix out(1, 1);
    out(0, 0) = A.mean();
    const double inv = 1.0 / static_cast<double>(A.size());
    return push(std::move(out), [a, inv](Tape& t, const Matrix& g) { t.acc(a).array() += g(0, 0) * inv; }, "mean");
  }

  // Row gather from an embedding table; gradient is scatter-added.
  Var embedding_lookup(Var table, std::span<const int> ids) {
    const Matrix& W = value(table);
    Matrix out(static_cast<Index>(ids.size()), W.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= W.rows())
        throw ShapeError("embedding_lookup: id " + std::to_string(ids[i]) + " outside table " + shape_str(W));
      out.row(static_cast<Index>(i)) = W.row(ids[i]);
    }
    std::vector<int> idx(ids.begin(), ids.end());
    return push(std::move(out), [table, idx = std::move(idx)](Tape& t, const Matrix& g) {
      Matrix& acc = t.acc(table);
      for (std::size_t i = 0; i < idx.size(); ++i) acc.row(idx[i]) += g.row(static_cast<Index>(i));
    }, "embedding_lookup");
  }

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const Index rows = value(parts[0]).rows();
    Index cols = 0;
    for (auto p : parts) {
      if (value(p).rows() != rows)
        throw ShapeError("concat_cols: shape mismatch " + shape_str(value(parts[0])) + " vs " + shape_str(value(p)));
      cols += value(p).cols();
    }
    Matrix out(rows, cols);
    Index off = 0;
    std::vector<Index> offsets;
    for (auto p : parts) {
      offsets.push_back(off);
      out.middleCols(off, value(p).cols()) = value(p);
      off += value(p).cols();
    }
    return push(std::move(out), [parts, offsets](Tape& t, const Matrix& g) {
      for (std::size_t i = 0; i < parts.size(); ++i)
        if (t.needs(parts[i])) t.acc(parts[i]) += g.middleCols(offsets[i], t.value(parts[i]).cols());
    }, "concat_cols");
  }

  // Per-row Lp norm (p = 1 or 2), output Nx1. Subgradient 0 at the origin.
  Var row_norm(Var a, int p) {
    const Matrix& A = value(a);
    Matrix out(A.rows(), 1);
    if (p == 1) {
      out.col(0) = A.cwiseAbs().rowwise().sum();
    } else if (p == 2) {
      out.col(0) = A.rowwise().norm();
    } else {
      throw ShapeError("row_norm: p must be 1 or 2");
    }
    int self = next_id();
    return push(std::move(out), [a, p, self](Tape& t, const Matrix& g) {
      const Matrix& A = t.value(a);
      Matrix& acc = t.acc(a);
      if (p == 1) {
        acc += (A.array().sign().colwise() * g.col(0).array()).matrix();
      } else {
        const Matrix& nrm = t.nodes_[self].value;
        for (Index i = 0; i < A.rows(); ++i)
          if (nrm(i, 0) > 0) acc.row(i) += A.row(i) * (g(i, 0) / nrm(i, 0));
      }
    }, "row_norm");
  }

  // Fused ||E[h_i] + R[r_i] - tail_i||_p per row. Tails are rows of `ent`
  // picked by `tails`, or the rows of `tail_rows` when that is a valid Var.
  Var translation_distance(Var ent, Var rel, std::span<const int> heads, std::span<const int> rels,
                           std::span<const int> tails, Var tail_rows, int p) {
    if (p != 1 && p != 2) throw ShapeError("translation_distance: p must be 1 or 2");
    const Matrix& E = value(ent);
    const Matrix& R = value(rel);
    const bool by_id = tail_rows.id < 0;
    const Index n = static_cast<Index>(heads.size());
    if (rels.size() != heads.size() || (by_id && tails.size() != heads.size()) ||
        (!by_id && value(tail_rows).rows() != n) || E.cols() != R.cols() ||
        (!by_id && value(tail_rows).cols() != E.cols()))
      throw ShapeError("translation_distance: mismatched inputs, entities " + shape_str(E) + ", relations " +
                       shape_str(R) + ", " + std::to_string(n) + " queries");
    auto check = [](int id, Index rows) {
      if (id < 0 || id >= rows)
        throw ShapeError("translation_distance: id " + std::to_string(id) + " outside table with " +
                         std::to_string(rows) + " rows");
    };
    for (Index i = 0; i < n; ++i) {
      check(heads[i], E.rows()), check(rels[i], R.rows());
      if (by_id) check(tails[i], E.rows());
    }
    std::vector<int> h(heads.begin(), heads.end()), r(rels.begin(), rels.end()), tl(tails.begin(), tails.end());
    auto diff_row = [by_id](const Matrix& E, const Matrix& R, const Matrix* T, int hi, int ri, int ti, Index i) {
      return RowVector(E.row(hi) + R.row(ri) - (by_id ? E.row(ti) : T->row(i)));
    };
    const Matrix* T = by_id ? nullptr : &value(tail_rows);
    Matrix out(n, 1);
    for (Index i = 0; i < n; ++i) {
      RowVector d = diff_row(E, R, T, h[i], r[i], by_id ? tl[i] : 0, i);
      out(i, 0) = p == 1 ? d.cwiseAbs().sum() : d.norm();
    }
    return push(std::move(out), [=, h = std::move(h), r = std::move(r), tl = std::move(tl)](Tape& t, const Matrix& g) {
      const Matrix& E = t.value(ent);
      const Matrix& R = t.value(rel);
      const Matrix* T = by_id ? nullptr : &t.value(tail_rows);
      const bool ge = t.needs(ent), gr = t.needs(rel), gt = !by_id && t.needs(tail_rows);
      Matrix* ae = ge ? &t.acc(ent) : nullptr;
      Matrix* ar = gr ? &t.acc(rel) : nullptr;
      Matrix* at = gt ? &t.acc(tail_rows) : nullptr;
      for (Index i = 0; i < static_cast<Index>(h.size()); ++i) {
        if (g(i, 0) == 0.0) continue;
        RowVector d = diff_row(E, R, T, h[i], r[i], by_id ? tl[i] : 0, i);
        if (p == 1) {
          d = d.array().sign().matrix() * g(i, 0);
        } else {
          const double nrm = d.norm();
          if (nrm == 0.0) continue;
          d *= g(i, 0) / nrm;
        }
        if (ae) ae->row(h[i]) += d;
        if (ar) ar->row(r[i]) += d;
        if (by_id) {
          if (ae) ae->row(tl[i]) -= d;
        } else if (at) {
          at->row(i) -= d;
        }
      }
    }, "translation_distance");
  }

  void backward(Var loss) {
    const Matrix& L = value(loss);
    if (L.size() != 1) throw ShapeError("backward: loss must be 1x1, got " + shape_str(L));
    for (auto& n : nodes_)
      if (!n.param) n.grad.resize(0, 0);
    acc(loss).array() += 1.0;
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.param || !n.backprop || n.grad.size() == 0) continue;
      n.backprop(*this, n.grad);
    }
  }

 private:
  using Backprop = std::function<void(Tape&, const Matrix&)>;

  struct Node {
    Matrix value;
    Matrix grad;
    Tensor* param = nullptr;
    Backprop backprop;
  };

  int next_id() const { return static_cast<int>(nodes_.size()); }

  Var push(Matrix value, Backprop backprop, const char* op) {
    if (!value.allFinite()) throw NumericalError(std::string("non-finite value produced by ") + op);
    Node n;
    n.value = std::move(value);
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
  }

  // Constants created with constant() carry no gradient.
  bool needs(Var v) const {
    const Node& n = nodes_[v.id];
    return n.param != nullptr || n.backprop != nullptr;
  }

  Matrix& acc(Var v) {
    Node& n = nodes_[v.id];
    if (n.param) return n.param->ensure_grad();
    if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  static void same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
      throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }

  Var add_sub(Var a, Var b, double sign, const char* op) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    const bool broadcast = B.rows() == 1 && A.rows() != 1 && B.cols() == A.cols();
    if (!broadcast) same_shape(A, B, op);
    Matrix out = broadcast ? Matrix(A.array().rowwise() + sign * B.row(0).array()) : Matrix(A + sign * B);
    return push(std::move(out), [a, b, sign, broadcast](Tape& t, const Matrix& g) {
      if (t.needs(a)) t.acc(a) += g;
      if (t.needs(b)) {
        if (broadcast)
          t.acc(b) += sign * g.colwise().sum();
        else
          t.acc(b) += sign * g;
      }
    }, op);
  }

  std::vector<Node> nodes_;
};

using Var = Tape::Var;

}  // namespace dans
