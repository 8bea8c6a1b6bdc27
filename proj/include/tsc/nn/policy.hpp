#pragma once

#include <span>
#include <vector>

#include "tsc/common/rng.hpp"
#include "tsc/nn/autodiff.hpp"

namespace tsc::nn {

struct PolicyDims {
  int vocab = 0;
  int features = 0;
  int embed = 16;
  int hidden = 64;
  int history = 4;  // generated tokens averaged into the history input

  void validate() const;
};

// Feed-forward token policy. For position l the trunk sees the context
// features (through network_input) and the mean embedding of the previous
// `history` tokens:
//   h1 = lrelu(x W_ctx + mean_emb W_hist + b1)
//   h2 = lrelu(h1 W2 + b2)
//   logits = h2 W_out + b_out
struct PolicyParams {
  PolicyDims dims;
  Matrix embedding;  // vocab x embed
  Matrix ctx_w;      // features x hidden
  Matrix hist_w;     // embed x hidden
  Matrix b1;         // 1 x hidden
  Matrix w2;         // hidden x hidden
  Matrix b2;         // 1 x hidden
  Matrix out_w;      // hidden x vocab
  Matrix out_b;      // 1 x vocab

  std::vector<Matrix*> tensors();
  std::vector<const Matrix*> tensors() const;
  std::size_t parameter_count() const;
};

// State-only critic: features -> 2F (leaky 0.01) -> 1, on network_input().
struct ValueParams {
  int features = 0;
  Matrix w1;  // F x 2F
  Matrix b1;  // 1 x 2F
  Matrix w2;  // 2F x 1
  Matrix b2;  // 1 x 1

  std::vector<Matrix*> tensors();
  std::vector<const Matrix*> tensors() const;
  std::size_t parameter_count() const;
};

inline constexpr double kLeakySlope = 0.01;

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
PolicyParams init_policy(const PolicyDims& dims, Rng& rng);
ValueParams init_value(int features, Rng& rng);

PolicyParams zeros_like(const PolicyParams& params);
ValueParams zeros_like(const ValueParams& params);

struct GradientBundle {
  PolicyParams policy;
  ValueParams value;

  static GradientBundle zeros(const PolicyParams& policy, const ValueParams& value);
};

// Frozen copy used as the KL reference. Plain deep copy; the live policy
// and the snapshot share no storage.
PolicyParams snapshot_reference(const PolicyParams& params);

struct SampledResponse {
  std::vector<int> tokens;
  std::vector<double> logprobs;  // log pi(a_l | s_l) at temperature 1
};

// Autoregressive sampling from softmax(logits / temperature). Stops after
// emitting `eos` or after max_len tokens.
SampledResponse sample_response(const PolicyParams& params, std::span<const double> features,
                                double temperature, int max_len, int eos, Rng& rng);

// Teacher-forced per-token log-probabilities. Throws ValidationError for an
// out-of-vocabulary token.
std::vector<double> logprobs(const PolicyParams& params, std::span<const double> features,
                             std::span<const int> tokens);

// Full log-softmax table: row l is the distribution over a_l.
Matrix log_distribution(const PolicyParams& params, std::span<const double> features,
                        std::span<const int> tokens);

struct TerminalState {};

double value(const ValueParams& params, std::span<const double> features);
inline double value(const ValueParams&, TerminalState) { return 0.0; }

// Parameters bound to a tape. Gradients are accumulated into the sink
// bundle on tape.backward(); a null sink makes the parameters constants.
class PolicyGraph {
 public:
  PolicyGraph(Tape& tape, const PolicyParams& params, PolicyParams* sink);

  // n x V log-softmax for the teacher-forced sequence.
  Var log_distribution(std::span<const double> features, std::span<const int> tokens);
  // n x 1 log-probs of the given tokens.
  Var logprobs(std::span<const double> features, std::span<const int> tokens);

 private:
  Tape* tape_;
  const PolicyParams* params_;
  Var embedding_, ctx_w_, hist_w_, b1_, w2_, b2_, out_w_, out_b_;
};

class ValueGraph {
 public:
  ValueGraph(Tape& tape, const ValueParams& params, ValueParams* sink);

  // Rows of `features` are states; returns n x 1.
  Var values(const Matrix& features);

 private:
  Tape* tape_;
  Var w1_, b1_, w2_, b2_;
};

Matrix features_row(std::span<const double> features);

// Network input: log(1 + x) of the raw count features, applied elementwise.
// Keeps the trunk out of saturation when queues grow large.
Matrix network_input(std::span<const double> features);
Matrix network_input(const Matrix& features);

}  // namespace tsc::nn
