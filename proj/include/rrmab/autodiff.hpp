// Copyright 2026 The robust-rmab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every operation as a node holding its value, an adjoint and
// a closure that pushes the adjoint to its inputs. Batches are rows: an
// input of shape (B, k) is B samples of width k.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rrmab/model.hpp"

namespace rrmab::ad {

using Matrix = Eigen::MatrixXd;

// A trainable tensor. Gradients accumulate across backward passes until
// zeroed by the optimizer.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

class Tape {
 public:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void(Tape&, const Matrix&)> backward;  // receives this node's adjoint
  };

  Var constant(Matrix v) { return push(std::move(v), nullptr); }

  Var param(Parameter& p) {
    return push(p.value, [&p](Tape&, const Matrix& g) { p.grad += g; });
  }

  Var push(Matrix v, std::function<void(Tape&, const Matrix&)> bw) {
    Node n;
    n.grad = Matrix::Zero(v.rows(), v.cols());
    n.value = std::move(v);
    n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  void accumulate(int id, const Matrix& g) { nodes_[id].grad += g; }

  void backward(const Var& loss) {
    if (loss.tape != this) throw InvariantViolation("backward: variable from another tape");
    if (loss.rows() != 1 || loss.cols() != 1) throw DimensionError("backward: loss must be scalar");
    nodes_[loss.id].grad(0, 0) += 1.0;
    for (int i = loss.id; i >= 0; --i) {
      auto& n = nodes_[i];
      if (n.backward) n.backward(*this, n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape->value(id); }
inline const Matrix& Var::grad() const { return tape->grad(id); }

namespace detail {

inline void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(op) + ": shape mismatch");
}

template <class F, class D>
Var unary(const Var& a, F f, D dfdx) {
  Matrix x = a.value();
  Matrix y = x.unaryExpr(f);
  const int ia = a.id;
  return a.tape->push(y, [ia, x, y, dfdx](Tape& t, const Matrix& g) {
    Matrix d(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) d(i) = dfdx(x(i), y(i));
    t.accumulate(ia, g.cwiseProduct(d));
  });
}

}  // namespace detail

inline Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ");
  const int ia = a.id, ib = b.id;
  return a.tape->push(a.value() * b.value(), [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g * t.value(ib).transpose());
    t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

inline Var add(const Var& a, const Var& b) {
  detail::same_shape(a, b, "add");
  const int ia = a.id, ib = b.id;
  return a.tape->push(a.value() + b.value(), [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::same_shape(a, b, "sub");
  const int ia = a.id, ib = b.id;
  return a.tape->push(a.value() - b.value(), [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

// (B, k) + (1, k) broadcast over rows.
inline Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw DimensionError("add_row: bad row shape");
  const int ia = a.id, ir = row.id;
  Matrix y = a.value().rowwise() + row.value().row(0);
  return a.tape->push(std::move(y), [ia, ir](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ir, g.colwise().sum());
  });
}

// (1, k) repeated to (n, k).
inline Var broadcast_rows(const Var& row, Eigen::Index n) {
  if (row.rows() != 1) throw DimensionError("broadcast_rows: expects a single row");
  const int ir = row.id;
  Matrix y = row.value().replicate(n, 1);
  return row.tape->push(std::move(y), [ir](Tape& t, const Matrix& g) {
    t.accumulate(ir, g.colwise().sum());
  });
}

inline Var mul(const Var& a, const Var& b) {
  detail::same_shape(a, b, "mul");
  const int ia = a.id, ib = b.id;
  return a.tape->push(a.value().cwiseProduct(b.value()), [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

inline Var scale(const Var& a, double c) {
  const int ia = a.id;
  return a.tape->push(a.value() * c, [ia, c](Tape& t, const Matrix& g) { t.accumulate(ia, g * c); });
}

inline Var add_scalar(const Var& a, double c) {
  const int ia = a.id;
  Matrix y = a.value().array() + c;
  return a.tape->push(std::move(y), [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g); });
}

inline Var tanh(const Var& a) {
  return detail::unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var exp(const Var& a) {
  return detail::unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(const Var& a) {
  return detail::unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var square(const Var& a) {
  return detail::unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline double softplus_value(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

inline double sigmoid_value(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline Var softplus(const Var& a) {
  return detail::unary(a, softplus_value, [](double x, double) { return sigmoid_value(x); });
}

inline Var sigmoid(const Var& a) {
  return detail::unary(a, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

// Elementwise clamp to [lo, hi]; zero gradient outside.
inline Var clip(const Var& a, double lo, double hi) {
  return detail::unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

inline Var minimum(const Var& a, const Var& b) {
  detail::same_shape(a, b, "minimum");
  const int ia = a.id, ib = b.id;
  Matrix y = a.value().cwiseMin(b.value());
  return a.tape->push(std::move(y), [ia, ib](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(ia);
    const Matrix& z = t.value(ib);
    Matrix ga = Matrix::Zero(g.rows(), g.cols()), gb = ga;
    for (Eigen::Index i = 0; i < g.size(); ++i) (x(i) <= z(i) ? ga : gb)(i) = g(i);
    t.accumulate(ia, ga);
    t.accumulate(ib, gb);
  });
}

inline Var sum(const Var& a) {
  const int ia = a.id;
  Matrix y(1, 1);
  y(0, 0) = a.value().sum();
  return a.tape->push(std::move(y), [ia](Tape& t, const Matrix& g) {
    const auto& x = t.value(ia);
    t.accumulate(ia, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

// Sum across columns: (B, k) -> (B, 1).
inline Var row_sum(const Var& a) {
  const int ia = a.id;
  Matrix y = a.value().rowwise().sum();
  return a.tape->push(std::move(y), [ia](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.replicate(1, t.value(ia).cols()));
  });
}

inline Var concat_cols(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) throw DimensionError("concat_cols: row counts differ");
  const int ia = a.id, ib = b.id;
  const Eigen::Index ka = a.cols(), kb = b.cols();
  Matrix y(a.rows(), ka + kb);
  y << a.value(), b.value();
  return a.tape->push(std::move(y), [ia, ib, ka, kb](Tape& t, const Matrix& g) {
    t.accumulate(ia, g.leftCols(ka));
    t.accumulate(ib, g.rightCols(kb));
  });
}

// Row-wise log-softmax.
inline Var log_softmax(const Var& a) {
  const int ia = a.id;
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const double lse = m + std::log((x.row(i).array() - m).exp().sum());
    y.row(i) = x.row(i).array() - lse;
  }
  Matrix p = y.array().exp();
  return a.tape->push(std::move(y), [ia, p](Tape& t, const Matrix& g) {
    Matrix d = g - p.cwiseProduct(g.rowwise().sum().replicate(1, p.cols()));
    t.accumulate(ia, d);
  });
}

// Picks a(i, idx[i]) for every row: (B, k) -> (B, 1).
inline Var gather(const Var& a, const std::vector<int>& idx) {
  if (static_cast<Eigen::Index>(idx.size()) != a.rows()) throw DimensionError("gather: index count");
  const int ia = a.id;
  const Eigen::Index cols = a.cols();
  Matrix y(a.rows(), 1);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (idx[i] < 0 || idx[i] >= cols) throw DimensionError("gather: index out of range");
    y(i, 0) = a.value()(i, idx[i]);
  }
  return a.tape->push(std::move(y), [ia, idx, cols](Tape& t, const Matrix& g) {
    Matrix d = Matrix::Zero(g.rows(), cols);
    for (Eigen::Index i = 0; i < g.rows(); ++i) d(i, idx[i]) = g(i, 0);
    t.accumulate(ia, d);
  });
}

// Operator sugar.
inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(const Var& a, double c) { return scale(a, c); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }

}  // namespace rrmab::ad
