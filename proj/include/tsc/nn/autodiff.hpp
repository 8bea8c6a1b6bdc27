#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace tsc::nn {

using Matrix = Eigen::MatrixXd;

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so a single
// reverse sweep visits every node after all of its consumers.
class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  Var constant(Matrix value);
  // Gradients flowing into a parameter are added to *sink on backward().
  Var parameter(const Matrix& value, Matrix* sink);

  Var push(Matrix value, Backward backward);

  // Seeds d(loss)/d(loss) = 1 and sweeps. Throws std::domain_error when the
  // loss is not a finite scalar.
  void backward(Var loss);

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  Matrix& grad(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }
  const Matrix& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  // Adds g into the gradient of node id.
  void accumulate(int id, const Matrix& g);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Matrix* sink = nullptr;
    bool has_grad = false;
  };
  std::vector<Node> nodes_;
};

// Matrix algebra. Rows index positions (tokens), columns index features.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var add_row(Var x, Var row);           // x (n x m) + row (1 x m) broadcast
Var broadcast_rows(Var row, Eigen::Index n);
Var leaky_relu(Var x, double slope);
Var exp(Var x);
Var square(Var x);
// Gradient passes where lo <= x <= hi and is exactly zero elsewhere.
Var clip(Var x, double lo, double hi);
// Elementwise min/max; ties route the gradient to the first argument.
Var minimum(Var a, Var b);
Var maximum(Var a, Var b);
Var sum(Var x);
Var mean(Var x);
Var log_softmax_rows(Var logits);
// out(i) = x(i, index[i]); result is n x 1.
Var pick(Var x, std::span<const int> index);
Var concat_rows(std::span<const Var> parts);
// Row l is the mean of the embeddings of tokens[l-k .. l-1] (fewer at the
// start); row 0 is all zeros.
Var history_mean_embedding(Var table, std::span<const int> tokens, int k);

}  // namespace tsc::nn
