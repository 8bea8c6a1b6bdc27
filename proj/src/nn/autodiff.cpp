#include "tsc/nn/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace tsc::nn {

namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape() != b.tape() || a.tape() == nullptr)
    throw std::invalid_argument("autodiff: operands live on different tapes");
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string("autodiff: shape mismatch in ") + op);
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Matrix value) { return push(std::move(value), nullptr); }

Var Tape::parameter(const Matrix& value, Matrix* sink) {
  Var v = push(value, nullptr);
  nodes_.back().sink = sink;
  return v;
}

Var Tape::push(Matrix value, Backward backward) {
  Node n;
  n.grad = Matrix::Zero(value.rows(), value.cols());
  n.value = std::move(value);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  n.grad += g;
  n.has_grad = true;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw std::invalid_argument("autodiff: loss is not on this tape");
  const Matrix& v = value(loss.id());
  if (v.rows() != 1 || v.cols() != 1) throw std::invalid_argument("autodiff: loss must be 1x1");
  if (!std::isfinite(v(0, 0))) throw std::domain_error("autodiff: loss is not finite");

  accumulate(loss.id(), Matrix::Ones(1, 1));
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.has_grad) continue;
    if (n.sink) *n.sink += n.grad;
    if (n.backward) n.backward(*this, i);
  }
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) throw std::invalid_argument("autodiff: shape mismatch in matmul");
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value() * b.value(), [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    t.accumulate(ia, g * t.value(ib).transpose());
    t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value() + b.value(), [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value() - b.value(), [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, -t.grad(self));
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value().cwiseProduct(b.value()), [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var scale(Var a, double s) {
  const int ia = a.id();
  return a.tape()->push(a.value() * s,
                        [ia, s](Tape& t, int self) { t.accumulate(ia, t.grad(self) * s); });
}

Var add_scalar(Var a, double s) {
  const int ia = a.id();
  return a.tape()->push(a.value().array() + s,
                        [ia](Tape& t, int self) { t.accumulate(ia, t.grad(self)); });
}

Var add_row(Var x, Var row) {
  require_same_tape(x, row);
  if (row.rows() != 1 || row.cols() != x.cols())
    throw std::invalid_argument("autodiff: shape mismatch in add_row");
  const int ix = x.id(), ir = row.id();
  Matrix out = x.value();
  out.rowwise() += row.value().row(0);
  return x.tape()->push(std::move(out), [ix, ir](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    t.accumulate(ix, g);
    t.accumulate(ir, g.colwise().sum());
  });
}

Var broadcast_rows(Var row, Eigen::Index n) {
  if (row.rows() != 1) throw std::invalid_argument("autodiff: broadcast_rows expects a row");
  const int ir = row.id();
  Matrix out = row.value().replicate(n, 1);
  return row.tape()->push(std::move(out), [ir](Tape& t, int self) {
    t.accumulate(ir, t.grad(self).colwise().sum());
  });
}

Var leaky_relu(Var x, double slope) {
  const int ix = x.id();
  Matrix out = x.value().unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
  return x.tape()->push(std::move(out), [ix, slope](Tape& t, int self) {
    const Matrix d =
        t.value(ix).unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
    t.accumulate(ix, t.grad(self).cwiseProduct(d));
  });
}

Var exp(Var x) {
  const int ix = x.id();
  Matrix out = x.value().array().exp().matrix();
  return x.tape()->push(std::move(out), [ix](Tape& t, int self) {
    t.accumulate(ix, t.grad(self).cwiseProduct(t.value(self)));
  });
}

Var square(Var x) {
  const int ix = x.id();
  return x.tape()->push(x.value().array().square().matrix(), [ix](Tape& t, int self) {
    t.accumulate(ix, 2.0 * t.grad(self).cwiseProduct(t.value(ix)));
  });
}

Var clip(Var x, double lo, double hi) {
  const int ix = x.id();
  Matrix out = x.value().cwiseMax(lo).cwiseMin(hi);
  return x.tape()->push(std::move(out), [ix, lo, hi](Tape& t, int self) {
    const Matrix pass =
        t.value(ix).unaryExpr([lo, hi](double v) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
    t.accumulate(ix, t.grad(self).cwiseProduct(pass));
  });
}

Var minimum(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "minimum");
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value().cwiseMin(b.value()), [ia, ib](Tape& t, int self) {
    const Matrix first = (t.value(ia).array() <= t.value(ib).array()).cast<double>().matrix();
    const Matrix& g = t.grad(self);
    t.accumulate(ia, g.cwiseProduct(first));
    t.accumulate(ib, g - g.cwiseProduct(first));
  });
}

Var maximum(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "maximum");
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value().cwiseMax(b.value()), [ia, ib](Tape& t, int self) {
    const Matrix first = (t.value(ia).array() >= t.value(ib).array()).cast<double>().matrix();
    const Matrix& g = t.grad(self);
    t.accumulate(ia, g.cwiseProduct(first));
    t.accumulate(ib, g - g.cwiseProduct(first));
  });
}

Var sum(Var x) {
  const int ix = x.id();
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return x.tape()->push(std::move(out), [ix](Tape& t, int self) {
    const Matrix& v = t.value(ix);
    t.accumulate(ix, Matrix::Constant(v.rows(), v.cols(), t.grad(self)(0, 0)));
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  if (n == 0) throw std::invalid_argument("autodiff: mean of empty matrix");
  return scale(sum(x), 1.0 / n);
}

Var log_softmax_rows(Var logits) {
  const int ix = logits.id();
  const Matrix& z = logits.value();
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    const double lse = m + std::log((z.row(r).array() - m).exp().sum());
    out.row(r) = z.row(r).array() - lse;
  }
  return logits.tape()->push(std::move(out), [ix](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix p = t.value(self).array().exp().matrix();
    const Eigen::VectorXd row_sums = g.rowwise().sum();
    Matrix d = g;
    for (Eigen::Index r = 0; r < d.rows(); ++r) d.row(r) -= row_sums(r) * p.row(r);
    t.accumulate(ix, d);
  });
}

Var pick(Var x, std::span<const int> index) {
  if (static_cast<Eigen::Index>(index.size()) != x.rows())
    throw std::invalid_argument("autodiff: pick needs one index per row");
  const int ix = x.id();
  std::vector<int> idx(index.begin(), index.end());
  Matrix out(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const int c = idx[static_cast<std::size_t>(r)];
    if (c < 0 || c >= x.cols()) throw std::out_of_range("autodiff: pick index out of range");
    out(r, 0) = x.value()(r, c);
  }
  return x.tape()->push(std::move(out), [ix, idx = std::move(idx)](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& v = t.value(ix);
    Matrix d = Matrix::Zero(v.rows(), v.cols());
    for (Eigen::Index r = 0; r < d.rows(); ++r) d(r, idx[static_cast<std::size_t>(r)]) = g(r, 0);
    t.accumulate(ix, d);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("autodiff: concat_rows of nothing");
  Tape* tape = parts.front().tape();
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  for (const Var& p : parts) {
    if (p.tape() != tape || p.cols() != cols)
      throw std::invalid_argument("autodiff: concat_rows operands disagree");
    ids.push_back(p.id());
    offsets.push_back(rows);
    rows += p.rows();
  }
  Matrix out(rows, cols);
  for (std::size_t i = 0; i < parts.size(); ++i)
    out.middleRows(offsets[i], parts[i].rows()) = parts[i].value();
  return tape->push(std::move(out), [ids = std::move(ids), offsets = std::move(offsets)](
                                        Tape& t, int self) {
    const Matrix& g = t.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const Eigen::Index n = t.value(ids[i]).rows();
      t.accumulate(ids[i], g.middleRows(offsets[i], n));
    }
  });
}

Var history_mean_embedding(Var table, std::span<const int> tokens, int k) {
  const int it = table.id();
  const Matrix& e = table.value();
  const auto n = static_cast<Eigen::Index>(tokens.size());
  std::vector<int> tok(tokens.begin(), tokens.end());
  for (int id : tok) {
    if (id < 0 || id >= e.rows()) throw std::out_of_range("autodiff: token id out of range");
  }
  Matrix out = Matrix::Zero(n, e.cols());
  for (Eigen::Index l = 1; l < n; ++l) {
    const Eigen::Index from = std::max<Eigen::Index>(0, l - k);
    for (Eigen::Index j = from; j < l; ++j) out.row(l) += e.row(tok[static_cast<std::size_t>(j)]);
    out.row(l) /= static_cast<double>(l - from);
  }
  return table.tape()->push(std::move(out), [it, k, tok = std::move(tok)](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& e = t.value(it);
    Matrix d = Matrix::Zero(e.rows(), e.cols());
    const auto n = static_cast<Eigen::Index>(tok.size());
    for (Eigen::Index l = 1; l < n; ++l) {
      const Eigen::Index from = std::max<Eigen::Index>(0, l - k);
      const double w = 1.0 / static_cast<double>(l - from);
      for (Eigen::Index j = from; j < l; ++j) d.row(tok[static_cast<std::size_t>(j)]) += w * g.row(l);
    }
    t.accumulate(it, d);
  });
}

}  // namespace tsc::nn
