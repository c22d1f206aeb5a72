// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace slowvit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

namespace ag {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

  const Matrix& value() const;
  const Matrix& grad() const;
  bool requires_grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double item() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode tape over dense double matrices.
///
/// Nodes are appended in evaluation order, so a reverse sweep is a valid
/// topological order. A tape constructed with grad disabled never records
/// backward closures; evaluation through it cannot produce gradients.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& grad_out)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Matrix value);
  Var constant(double value);
  /// A leaf whose gradient is accumulated.
  Var leaf(Matrix value, bool requires_grad = true);
  /// A leaf that references storage owned elsewhere (model parameters).
  /// The referenced matrix must outlive the tape and stay unmodified.
  Var external(const Matrix& ref, bool requires_grad);

  /// Records an op. The node requires grad iff grad is enabled and any input
  /// requires grad; `backward` is dropped otherwise.
  Var record(Matrix value, std::span<const Var> inputs, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 for a 1x1 node and sweeps the tape.
  void backward(Var loss);

  const Matrix& value(int id) const;
  /// Gradient of a node; a zero matrix if nothing flowed into it.
  const Matrix& grad(int id) const;
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  /// Accumulates into the gradient of `v` (no-op if v does not require grad).
  void accumulate(const Var& v, const Matrix& g);

  std::size_t size() const { return nodes_.size(); }

  /// Total number of backward sweeps executed by any tape in this process.
  static std::uint64_t backward_sweeps();

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    mutable Matrix grad;
    BackwardFn backward;
    bool requires_grad = false;
  };
  Matrix& grad_ref(int id);

  std::deque<Node> nodes_;
  bool grad_enabled_;
};

// ---------------------------------------------------------------------------
// Differentiable ops. All shapes are checked; mismatches throw ContractError.

Var matmul(const Var& a, const Var& b);
/// a * b^T
Var matmul_nt(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Adds a 1 x cols row vector to every row of `a`.
Var add_row(const Var& a, const Var& row);
Var add_scalar(const Var& a, double s);
Var scale(const Var& a, double s);
/// Elementwise product.
Var mul(const Var& a, const Var& b);
/// Scales row i of `a` by col(i); `col` is rows x 1.
Var mul_col(const Var& a, const Var& col);
/// Scales every entry of `a` by the 1x1 node `s`.
Var mul_scalar(const Var& a, const Var& s);
/// Divides every entry of `a` by the 1x1 node `s`.
Var div_scalar(const Var& a, const Var& s);
Var square(const Var& a);
Var log(const Var& a);
Var sigmoid(const Var& a);
/// Exact (erf) GELU.
Var gelu(const Var& a);
/// max(a, floor) elementwise; gradient passes where a > floor.
Var clamp_min(const Var& a, double floor);
/// Row-wise layer normalization with affine 1 x cols gamma/beta.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);
/// Row softmax where key j carries multiplicative weight gate(j):
/// out(i,j) = gate(j) exp(s(i,j)) / sum_k gate(k) exp(s(i,k)).
/// `gate` is cols x 1 with entries >= 0; a zero gate removes the key exactly.
Var gated_softmax(const Var& scores, const Var& gate);
Var cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var hcat(std::span<const Var> parts);
Var vcat(std::span<const Var> parts);
Var transpose(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
/// rows x 1 vector of row sums.
Var row_sum(const Var& a);
/// Negative log-likelihood of `label` under softmax(logits); logits is 1 x C.
Var cross_entropy(const Var& logits, int label);
/// Forward value `hard`, gradient routed to `soft` unchanged.
Var straight_through(const Var& soft, const Matrix& hard);

}  // namespace ag
}  // namespace slowvit
