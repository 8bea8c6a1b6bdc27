#pragma once

#include <span>
#include <string>
#include <vector>

namespace tsc::reward {

enum class EntropyMode { SoftmaxDse, NaiveDse, Off };
enum class EnvMode { QueueDifference, NegativeQueue };

EntropyMode entropy_mode_from_string(const std::string& text);
EnvMode env_mode_from_string(const std::string& text);
std::string to_string(EntropyMode mode);
std::string to_string(EnvMode mode);

struct RewardConfig {
  double hurdle = 3.0;            // vehicles
  double entropy_weight = 0.0;
  double temperature = 1.0;       // softmax DSE temperature
  double kl_weight = 0.05;
  EntropyMode entropy_mode = EntropyMode::SoftmaxDse;
  EnvMode env_mode = EnvMode::QueueDifference;

  void validate() const;
};

double env_reward(double queue_prev, double queue_curr, EnvMode mode);
double hurdle(double env, double hurdle_rate);

// exp(c_j / tau) / sum_i exp(c_i / tau), with max-subtraction.
double softmax_dse_prob(std::span<const int> counts, int chosen, double tau);
// c_j / sum_i c_i.
double naive_dse_prob(std::span<const int> counts, int chosen);

// p_chosen when env strictly exceeds the hurdle, else exactly 0.
double gated_entropy_reward(double p_chosen, double env, double hurdle_rate);

double total_reward(double env, double hurdle_rate, double entropy_weight, double entropy_reward);

// ratio = exp(logp_ref - logp_policy); returns ratio - log(ratio) - 1.
double k3_kl(double logp_policy, double logp_ref);

// -kl_weight * k3 on every token but the last, which carries final_reward alone.
// Throws ValidationError when the vectors are not aligned or empty.
std::vector<double> assemble_token_rewards(double final_reward, double kl_weight,
                                           std::span<const double> policy_logprobs,
                                           std::span<const double> ref_logprobs);

struct RewardBundle {
  double env = 0.0;
  double total = 0.0;
  double p_chosen = 0.0;
  double entropy_reward = 0.0;
  bool gate_open = false;
};

// Sequence-level reward for one decision from the phase histogram.
RewardBundle decision_reward(const RewardConfig& config, double queue_prev, double queue_curr,
                             std::span<const int> counts, int chosen);

}  // namespace tsc::reward
