// Copyright (C) 2026 The slowvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "slowvit/autograd.hpp"

#include <atomic>
#include <cmath>
#include <numbers>
#include <sstream>

#include "slowvit/errors.hpp"

namespace slowvit::ag {

namespace {

std::atomic<std::uint64_t> g_backward_sweeps{0};

void require(bool cond, const char* op, const std::string& what) {
  if (!cond) {
    throw ContractError(std::string(op) + ": " + what);
  }
}

std::string shape(const Var& v) {
  std::ostringstream os;
  os << v.rows() << "x" << v.cols();
  return os.str();
}

void same_tape(const Var& a, const Var& b, const char* op) {
  require(a.valid() && b.valid() && a.tape() == b.tape(), op, "operands on different tapes");
}

}  // namespace

// --- Var -------------------------------------------------------------------

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

double Var::item() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw ContractError("Var::item on non-scalar node");
  }
  return v(0, 0);
}

// --- Tape ------------------------------------------------------------------

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Tape::leaf(Matrix value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad && grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::external(const Matrix& ref, bool requires_grad) {
  Node n;
  n.external = &ref;
  n.requires_grad = requires_grad && grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, std::span<const Var> inputs, BackwardFn backward) {
  bool needs = false;
  if (grad_enabled_) {
    for (const Var& in : inputs) {
      if (in.tape() != this) {
        throw ContractError("Tape::record: input belongs to another tape");
      }
      needs = needs || nodes_[in.id()].requires_grad;
    }
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) {
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

const Matrix& Tape::value(int id) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(id));
  return n.external != nullptr ? *n.external : n.value;
}

Matrix& Tape::grad_ref(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) {
    const Matrix& v = value(id);
    n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

const Matrix& Tape::grad(int id) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(id));
  if (n.grad.size() == 0) {
    const Matrix& v = value(id);
    n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

void Tape::accumulate(const Var& v, const Matrix& g) {
  if (!nodes_[static_cast<std::size_t>(v.id())].requires_grad) {
    return;
  }
  grad_ref(v.id()) += g;
}

void Tape::backward(Var loss) {
  if (!grad_enabled_) {
    throw ContractError("Tape::backward: tape was created with grad disabled");
  }
  if (loss.tape() != this || loss.rows() != 1 || loss.cols() != 1) {
    throw ContractError("Tape::backward: loss must be a 1x1 node of this tape");
  }
  g_backward_sweeps.fetch_add(1, std::memory_order_relaxed);
  if (!nodes_[static_cast<std::size_t>(loss.id())].requires_grad) {
    return;
  }
  grad_ref(loss.id())(0, 0) += 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || !n.backward || n.grad.size() == 0) {
      continue;
    }
    // Copy: the closure may grow other nodes' grads but never this one.
    const Matrix g = n.grad;
    n.backward(*this, g);
  }
}

std::uint64_t Tape::backward_sweeps() { return g_backward_sweeps.load(); }

// --- ops -------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  same_tape(a, b, "matmul");
  require(a.cols() == b.rows(), "matmul", shape(a) + " * " + shape(b));
  Tape& t = *a.tape();
  Matrix out = a.value() * b.value();
  const Var in[] = {a, b};
  return t.record(std::move(out), in, [a, b](Tape& tp, const Matrix& g) {
    if (a.requires_grad()) tp.accumulate(a, g * b.value().transpose());
    if (b.requires_grad()) tp.accumulate(b, a.value().transpose() * g);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  same_tape(a, b, "matmul_nt");
  require(a.cols() == b.cols(), "matmul_nt", shape(a) + " * T(" + shape(b) + ")");
  Tape& t = *a.tape();
  Matrix out = a.value() * b.value().transpose();
  const Var in[] = {a, b};
  return t.record(std::move(out), in, [a, b](Tape& tp, const Matrix& g) {
    if (a.requires_grad()) tp.accumulate(a, g * b.value());
    if (b.requires_grad()) tp.accumulate(b, g.transpose() * a.value());
  });
}

Var add(const Var& a, const Var& b) {
  same_tape(a, b, "add");
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add", shape(a) + " + " + shape(b));
  const Var in[] = {a, b};
  return a.tape()->record(a.value() + b.value(), in, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  same_tape(a, b, "sub");
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub", shape(a) + " - " + shape(b));
  const Var in[] = {a, b};
  return a.tape()->record(a.value() - b.value(), in, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, -g);
  });
}

Var add_row(const Var& a, const Var& row) {
  same_tape(a, row, "add_row");
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row", shape(a) + " + row " + shape(row));
  Matrix out = a.value().rowwise() + row.value().row(0);
  const Var in[] = {a, row};
  return a.tape()->record(std::move(out), in, [a, row](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    if (row.requires_grad()) tp.accumulate(row, g.colwise().sum());
  });
}

Var add_scalar(const Var& a, double s) {
  const Var in[] = {a};
  return a.tape()->record(a.value().array() + s, in,
                          [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g); });
}

Var scale(const Var& a, double s) {
  const Var in[] = {a};
  return a.tape()->record(a.value() * s, in,
                          [a, s](Tape& tp, const Matrix& g) { tp.accumulate(a, g * s); });
}

Var mul(const Var& a, const Var& b) {
  same_tape(a, b, "mul");
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul", shape(a) + " .* " + shape(b));
  Matrix out = a.value().cwiseProduct(b.value());
  const Var in[] = {a, b};
  return a.tape()->record(std::move(out), in, [a, b](Tape& tp, const Matrix& g) {
    if (a.requires_grad()) tp.accumulate(a, g.cwiseProduct(b.value()));
    if (b.requires_grad()) tp.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var mul_col(const Var& a, const Var& col) {
  same_tape(a, col, "mul_col");
  require(col.cols() == 1 && col.rows() == a.rows(), "mul_col", shape(a) + " row-scaled by " + shape(col));
  Matrix out = col.value().col(0).asDiagonal() * a.value();
  const Var in[] = {a, col};
  return a.tape()->record(std::move(out), in, [a, col](Tape& tp, const Matrix& g) {
    if (a.requires_grad()) tp.accumulate(a, col.value().col(0).asDiagonal() * g);
    if (col.requires_grad()) tp.accumulate(col, g.cwiseProduct(a.value()).rowwise().sum());
  });
}

Var mul_scalar(const Var& a, const Var& s) {
  same_tape(a, s, "mul_scalar");
  require(s.rows() == 1 && s.cols() == 1, "mul_scalar", "scale must be 1x1, got " + shape(s));
  const double k = s.value()(0, 0);
  const Var in[] = {a, s};
  return a.tape()->record(a.value() * k, in, [a, s, k](Tape& tp, const Matrix& g) {
    if (a.requires_grad()) tp.accumulate(a, g * k);
    if (s.requires_grad()) tp.accumulate(s, Matrix::Constant(1, 1, g.cwiseProduct(a.value()).sum()));
  });
}

Var div_scalar(const Var& a, const Var& s) {
  same_tape(a, s, "div_scalar");
  require(s.rows() == 1 && s.cols() == 1, "div_scalar", "divisor must be 1x1, got " + shape(s));
  const double k = s.value()(0, 0);
  const Var in[] = {a, s};
  return a.tape()->record(a.value() / k, in, [a, s, k](Tape& tp, const Matrix& g) {
    if (a.requires_grad()) tp.accumulate(a, g / k);
    if (s.requires_grad()) {
      tp.accumulate(s, Matrix::Constant(1, 1, -g.cwiseProduct(a.value()).sum() / (k * k)));
    }
  });
}

Var square(const Var& a) {
  const Var in[] = {a};
  return a.tape()->record(a.value().array().square().matrix(), in, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, 2.0 * g.cwiseProduct(a.value()));
  });
}

Var log(const Var& a) {
  const Var in[] = {a};
  return a.tape()->record(a.value().array().log().matrix(), in, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g.cwiseQuotient(a.value()));
  });
}

Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) {
    // Split form avoids overflow in exp for large |x|.
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  const Var in[] = {a};
  Matrix y = out;
  return a.tape()->record(std::move(out), in, [a, y = std::move(y)](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Var gelu(const Var& a) {
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  Matrix out = a.value().unaryExpr([=](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); });
  const Var in[] = {a};
  return a.tape()->record(std::move(out), in, [=](Tape& tp, const Matrix& g) {
    Matrix d = a.value().unaryExpr([=](double x) {
      return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
    });
    tp.accumulate(a, g.cwiseProduct(d));
  });
}

Var clamp_min(const Var& a, double floor) {
  Matrix out = a.value().cwiseMax(floor);
  const Var in[] = {a};
  return a.tape()->record(std::move(out), in, [a, floor](Tape& tp, const Matrix& g) {
    Matrix pass = (a.value().array() > floor).cast<double>().matrix();
    tp.accumulate(a, g.cwiseProduct(pass));
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  same_tape(x, gamma, "layer_norm");
  same_tape(x, beta, "layer_norm");
  const Eigen::Index d = x.cols();
  require(gamma.rows() == 1 && gamma.cols() == d && beta.rows() == 1 && beta.cols() == d, "layer_norm",
          "affine params must be 1x" + std::to_string(d));
  const Matrix& xv = x.value();
  Vector mu = xv.rowwise().mean();
  Matrix xc = xv.colwise() - mu;
  Vector inv_std = ((xc.array().square().rowwise().sum() / static_cast<double>(d)) + eps).rsqrt().matrix();
  Matrix xhat = inv_std.asDiagonal() * xc;
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  const Var in[] = {x, gamma, beta};
  return x.tape()->record(std::move(out), in,
                          [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                              Tape& tp, const Matrix& g) {
                            if (gamma.requires_grad()) tp.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
                            if (beta.requires_grad()) tp.accumulate(beta, g.colwise().sum());
                            if (x.requires_grad()) {
                              Matrix gh = (g.array().rowwise() * gamma.value().row(0).array()).matrix();
                              Vector m1 = gh.rowwise().mean();
                              Vector m2 = gh.cwiseProduct(xhat).rowwise().mean();
                              Matrix dx = gh;
                              dx.colwise() -= m1;
                              dx -= m2.asDiagonal() * xhat;
                              tp.accumulate(x, inv_std.asDiagonal() * dx);
                            }
                          });
}

Var gated_softmax(const Var& scores, const Var& gate) {
  same_tape(scores, gate, "gated_softmax");
  require(gate.cols() == 1 && gate.rows() == scores.cols(), "gated_softmax",
          "gate must be " + std::to_string(scores.cols()) + "x1, got " + shape(gate));
  const Matrix& s = scores.value();
  const Vector gv = gate.value().col(0);
  const Eigen::Index n = s.rows();
  const Eigen::Index m = s.cols();
  Matrix e(n, m);
  Matrix w(n, m);
  Vector z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m; ++j) {
      if (gv(j) > 0) mx = std::max(mx, s(i, j));
    }
    if (!std::isfinite(mx)) {
      throw ContractError("gated_softmax: every key is gated off");
    }
    double zi = 0;
    for (Eigen::Index j = 0; j < m; ++j) {
      e(i, j) = std::exp(s(i, j) - mx);
      w(i, j) = gv(j) * e(i, j);
      zi += w(i, j);
    }
    z(i) = zi;
  }
  Matrix out = z.cwiseInverse().asDiagonal() * w;
  const Var in[] = {scores, gate};
  Matrix a = out;
  return scores.tape()->record(
      std::move(out), in,
      [scores, gate, a = std::move(a), e = std::move(e), z = std::move(z)](Tape& tp, const Matrix& g) {
        // dw_ij = (g_ij - sum_k g_ik a_ik) / z_i
        // ds_ij = dw_ij * w_ij = (g_ij - sum_k g_ik a_ik) a_ij
        Vector dot = g.cwiseProduct(a).rowwise().sum();
        Matrix centered = g;
        centered.colwise() -= dot;
        if (scores.requires_grad()) tp.accumulate(scores, centered.cwiseProduct(a));
        if (gate.requires_grad()) {
          Matrix dw = z.cwiseInverse().asDiagonal() * centered;
          tp.accumulate(gate, dw.cwiseProduct(e).colwise().sum().transpose());
        }
      });
}

Var cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "cols",
          "range [" + std::to_string(start) + ", +" + std::to_string(count) + ") of " + shape(a));
  const Var in[] = {a};
  return a.tape()->record(a.value().middleCols(start, count), in, [a, start, count](Tape& tp, const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleCols(start, count) = g;
    tp.accumulate(a, full);
  });
}

Var rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.rows(), "rows",
          "range [" + std::to_string(start) + ", +" + std::to_string(count) + ") of " + shape(a));
  const Var in[] = {a};
  return a.tape()->record(a.value().middleRows(start, count), in, [a, start, count](Tape& tp, const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleRows(start, count) = g;
    tp.accumulate(a, full);
  });
}

Var hcat(std::span<const Var> parts) {
  require(!parts.empty(), "hcat", "no operands");
  const Eigen::Index r = parts[0].rows();
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p, "hcat");
    require(p.rows() == r, "hcat", "row mismatch " + shape(parts[0]) + " vs " + shape(p));
    c += p.cols();
  }
  Matrix out(r, c);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts[0].tape()->record(std::move(out), parts, [ps](Tape& tp, const Matrix& g) {
    Eigen::Index off = 0;
    for (const Var& p : ps) {
      if (p.requires_grad()) tp.accumulate(p, g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

Var vcat(std::span<const Var> parts) {
  require(!parts.empty(), "vcat", "no operands");
  const Eigen::Index c = parts[0].cols();
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p, "vcat");
    require(p.cols() == c, "vcat", "col mismatch " + shape(parts[0]) + " vs " + shape(p));
    r += p.rows();
  }
  Matrix out(r, c);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts[0].tape()->record(std::move(out), parts, [ps](Tape& tp, const Matrix& g) {
    Eigen::Index off = 0;
    for (const Var& p : ps) {
      if (p.requires_grad()) tp.accumulate(p, g.middleRows(off, p.rows()));
      off += p.rows();
    }
  });
}

Var transpose(const Var& a) {
  const Var in[] = {a};
  return a.tape()->record(a.value().transpose(), in,
                          [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g.transpose()); });
}

Var sum(const Var& a) {
  const Var in[] = {a};
  return a.tape()->record(Matrix::Constant(1, 1, a.value().sum()), in, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(const Var& a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) {
    throw DomainError("mean of an empty matrix");
  }
  return scale(sum(a), 1.0 / n);
}

Var row_sum(const Var& a) {
  const Var in[] = {a};
  return a.tape()->record(a.value().rowwise().sum(), in, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g.col(0).replicate(1, a.cols()));
  });
}

Var cross_entropy(const Var& logits, int label) {
  require(logits.rows() == 1, "cross_entropy", "logits must be a row, got " + shape(logits));
  require(label >= 0 && label < logits.cols(), "cross_entropy", "label " + std::to_string(label) + " out of range");
  const RowVector l = logits.value().row(0);
  const double mx = l.maxCoeff();
  RowVector p = (l.array() - mx).exp().matrix();
  const double z = p.sum();
  p /= z;
  const double loss = -(l(label) - mx - std::log(z));
  const Var in[] = {logits};
  return logits.tape()->record(Matrix::Constant(1, 1, loss), in, [logits, p, label](Tape& tp, const Matrix& g) {
    Matrix d = p;
    d(0, label) -= 1.0;
    tp.accumulate(logits, d * g(0, 0));
  });
}

Var straight_through(const Var& soft, const Matrix& hard) {
  require(soft.rows() == hard.rows() && soft.cols() == hard.cols(), "straight_through", "shape mismatch");
  const Var in[] = {soft};
  return soft.tape()->record(hard, in, [soft](Tape& tp, const Matrix& g) { tp.accumulate(soft, g); });
}

}  // namespace slowvit::ag
