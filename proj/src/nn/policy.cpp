#include "tsc/nn/policy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tsc/common/error.hpp"

namespace tsc::nn {

namespace {

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = (2.0 * uniform01(rng) - 1.0) * bound;
  return m;
}

double lrelu(double v) { return v > 0.0 ? v : kLeakySlope * v; }

void check_features(const PolicyDims& dims, std::span<const double> features) {
  if (static_cast<int>(features.size()) != dims.features)
    throw ValidationError("policy: expected " + std::to_string(dims.features) +
                          " features, got " + std::to_string(features.size()));
}

void check_tokens(const PolicyDims& dims, std::span<const int> tokens) {
  for (int t : tokens)
    if (t < 0 || t >= dims.vocab)
      throw ValidationError("policy: token id " + std::to_string(t) + " outside vocabulary of " +
                            std::to_string(dims.vocab));
}

// Shared by sampling and teacher forcing so both see the same arithmetic.
class RowEvaluator {
 public:
  RowEvaluator(const PolicyParams& p, std::span<const double> features) : p_(p) {
    ctx_ = network_input(features) * p.ctx_w + p.b1;
  }

  // Logits for the next token after `prefix`.
  Eigen::RowVectorXd logits(std::span<const int> prefix) const {
    Eigen::RowVectorXd hist = Eigen::RowVectorXd::Zero(p_.dims.embed);
    const std::size_t k = static_cast<std::size_t>(p_.dims.history);
    const std::size_t from = prefix.size() > k ? prefix.size() - k : 0;
    for (std::size_t j = from; j < prefix.size(); ++j) hist += p_.embedding.row(prefix[j]);
    if (prefix.size() > from) hist /= static_cast<double>(prefix.size() - from);
    Eigen::RowVectorXd h1 = ctx_ + hist * p_.hist_w;
    h1 = h1.unaryExpr(&lrelu);
    Eigen::RowVectorXd h2 = h1 * p_.w2 + p_.b2;
    h2 = h2.unaryExpr(&lrelu);
    return h2 * p_.out_w + p_.out_b;
  }

 private:
  const PolicyParams& p_;
  Eigen::RowVectorXd ctx_;
};

Eigen::RowVectorXd log_softmax(const Eigen::RowVectorXd& z) {
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return z.array() - lse;
}

}  // namespace

void PolicyDims::validate() const {
  if (vocab < 1 || features < 1 || embed < 1 || hidden < 1 || history < 1)
    throw ValidationError("policy: all dimensions must be >= 1");
}

std::vector<Matrix*> PolicyParams::tensors() {
  return {&embedding, &ctx_w, &hist_w, &b1, &w2, &b2, &out_w, &out_b};
}

std::vector<const Matrix*> PolicyParams::tensors() const {
  return {&embedding, &ctx_w, &hist_w, &b1, &w2, &b2, &out_w, &out_b};
}

std::size_t PolicyParams::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* m : tensors()) n += static_cast<std::size_t>(m->size());
  return n;
}

std::vector<Matrix*> ValueParams::tensors() { return {&w1, &b1, &w2, &b2}; }
std::vector<const Matrix*> ValueParams::tensors() const { return {&w1, &b1, &w2, &b2}; }

std::size_t ValueParams::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* m : tensors()) n += static_cast<std::size_t>(m->size());
  return n;
}

PolicyParams init_policy(const PolicyDims& dims, Rng& rng) {
  dims.validate();
  PolicyParams p;
  p.dims = dims;
  p.embedding = uniform_matrix(dims.vocab, dims.embed, rng);
  p.ctx_w = uniform_matrix(dims.features, dims.hidden, rng);
  p.hist_w = uniform_matrix(dims.embed, dims.hidden, rng);
  p.b1 = Matrix::Zero(1, dims.hidden);
  p.w2 = uniform_matrix(dims.hidden, dims.hidden, rng);
  p.b2 = Matrix::Zero(1, dims.hidden);
  p.out_w = uniform_matrix(dims.hidden, dims.vocab, rng);
  p.out_b = Matrix::Zero(1, dims.vocab);
  return p;
}

ValueParams init_value(int features, Rng& rng) {
  if (features < 1) throw ValidationError("value head: features must be >= 1");
  ValueParams v;
  v.features = features;
  v.w1 = uniform_matrix(features, 2 * features, rng);
  v.b1 = Matrix::Zero(1, 2 * features);
  v.w2 = uniform_matrix(2 * features, 1, rng);
  v.b2 = Matrix::Zero(1, 1);
  return v;
}

PolicyParams zeros_like(const PolicyParams& params) {
  PolicyParams z = params;
  for (Matrix* m : z.tensors()) m->setZero();
  return z;
}

ValueParams zeros_like(const ValueParams& params) {
  ValueParams z = params;
  for (Matrix* m : z.tensors()) m->setZero();
  return z;
}

GradientBundle GradientBundle::zeros(const PolicyParams& policy, const ValueParams& value) {
  return {zeros_like(policy), zeros_like(value)};
}

PolicyParams snapshot_reference(const PolicyParams& params) { return params; }

Matrix features_row(std::span<const double> features) {
  Matrix row(1, static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) row(0, static_cast<Eigen::Index>(i)) = features[i];
  return row;
}

Matrix network_input(const Matrix& features) {
  return features.unaryExpr([](double x) { return std::log1p(std::max(x, 0.0)); });
}

Matrix network_input(std::span<const double> features) { return network_input(features_row(features)); }

SampledResponse sample_response(const PolicyParams& params, std::span<const double> features,
                                double temperature, int max_len, int eos, Rng& rng) {
  if (!(temperature > 0.0)) throw ValidationError("sample_response: temperature must be > 0");
  if (max_len < 1) throw ValidationError("sample_response: max_len must be >= 1");
  check_features(params.dims, features);
  RowEvaluator eval(params, features);

  SampledResponse out;
  while (static_cast<int>(out.tokens.size()) < max_len) {
    const Eigen::RowVectorXd z = eval.logits(out.tokens);
    const Eigen::RowVectorXd scaled = z / temperature;
    const double m = scaled.maxCoeff();
    const Eigen::RowVectorXd w = (scaled.array() - m).exp();
    const double u = uniform01(rng) * w.sum();
    int pick = static_cast<int>(w.size()) - 1;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      acc += w(i);
      if (u < acc) {
        pick = static_cast<int>(i);
        break;
      }
    }
    // A zero-weight tail can only be reached through rounding; fall back to
    // the last positive-weight token.
    while (w(pick) <= 0.0 && pick > 0) --pick;
    out.logprobs.push_back(log_softmax(z)(pick));
    out.tokens.push_back(pick);
    if (pick == eos) break;
  }
  return out;
}

Matrix log_distribution(const PolicyParams& params, std::span<const double> features,
                        std::span<const int> tokens) {
  check_features(params.dims, features);
  check_tokens(params.dims, tokens);
  RowEvaluator eval(params, features);
  Matrix out(static_cast<Eigen::Index>(tokens.size()), params.dims.vocab);
  for (std::size_t l = 0; l < tokens.size(); ++l)
    out.row(static_cast<Eigen::Index>(l)) = log_softmax(eval.logits(tokens.first(l)));
  return out;
}

std::vector<double> logprobs(const PolicyParams& params, std::span<const double> features,
                             std::span<const int> tokens) {
  const Matrix table = log_distribution(params, features, tokens);
  std::vector<double> out(tokens.size());
  for (std::size_t l = 0; l < tokens.size(); ++l)
    out[l] = table(static_cast<Eigen::Index>(l), tokens[l]);
  return out;
}

double value(const ValueParams& params, std::span<const double> features) {
  if (static_cast<int>(features.size()) != params.features)
    throw ValidationError("value head: expected " + std::to_string(params.features) +
                          " features, got " + std::to_string(features.size()));
  Eigen::RowVectorXd h = network_input(features) * params.w1 + params.b1;
  h = h.unaryExpr(&lrelu);
  return (h * params.w2 + params.b2)(0, 0);
}

namespace {
Var bind(Tape& tape, const Matrix& m, Matrix* sink) {
  return sink ? tape.parameter(m, sink) : tape.constant(m);
}
}  // namespace

PolicyGraph::PolicyGraph(Tape& tape, const PolicyParams& params, PolicyParams* sink)
    : tape_(&tape), params_(&params) {
  embedding_ = bind(tape, params.embedding, sink ? &sink->embedding : nullptr);
  ctx_w_ = bind(tape, params.ctx_w, sink ? &sink->ctx_w : nullptr);
  hist_w_ = bind(tape, params.hist_w, sink ? &sink->hist_w : nullptr);
  b1_ = bind(tape, params.b1, sink ? &sink->b1 : nullptr);
  w2_ = bind(tape, params.w2, sink ? &sink->w2 : nullptr);
  b2_ = bind(tape, params.b2, sink ? &sink->b2 : nullptr);
  out_w_ = bind(tape, params.out_w, sink ? &sink->out_w : nullptr);
  out_b_ = bind(tape, params.out_b, sink ? &sink->out_b : nullptr);
}

Var PolicyGraph::log_distribution(std::span<const double> features, std::span<const int> tokens) {
  check_features(params_->dims, features);
  check_tokens(params_->dims, tokens);
  if (tokens.empty()) throw ValidationError("policy: empty token sequence");
  Var x = tape_->constant(network_input(features));
  Var ctx = add(matmul(x, ctx_w_), b1_);
  Var hist = history_mean_embedding(embedding_, tokens, params_->dims.history);
  Var h1 = leaky_relu(add_row(matmul(hist, hist_w_), ctx), kLeakySlope);
  Var h2 = leaky_relu(add_row(matmul(h1, w2_), b2_), kLeakySlope);
  Var logits = add_row(matmul(h2, out_w_), out_b_);
  return log_softmax_rows(logits);
}

Var PolicyGraph::logprobs(std::span<const double> features, std::span<const int> tokens) {
  return pick(log_distribution(features, tokens), tokens);
}

ValueGraph::ValueGraph(Tape& tape, const ValueParams& params, ValueParams* sink) : tape_(&tape) {
  w1_ = bind(tape, params.w1, sink ? &sink->w1 : nullptr);
  b1_ = bind(tape, params.b1, sink ? &sink->b1 : nullptr);
  w2_ = bind(tape, params.w2, sink ? &sink->w2 : nullptr);
  b2_ = bind(tape, params.b2, sink ? &sink->b2 : nullptr);
}

Var ValueGraph::values(const Matrix& features) {
  Var x = tape_->constant(network_input(features));
  Var h = leaky_relu(add_row(matmul(x, w1_), b1_), kLeakySlope);
  return add_row(matmul(h, w2_), b2_);
}

}  // namespace tsc::nn
