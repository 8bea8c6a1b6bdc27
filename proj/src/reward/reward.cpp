#include "tsc/reward/reward.hpp"

#include <algorithm>
#include <cmath>

#include "tsc/common/error.hpp"

namespace tsc::reward {

namespace {

void check_chosen(std::span<const int> counts, int chosen) {
  if (counts.empty()) throw ValidationError("dse: counts must be nonempty");
  if (chosen < 0 || chosen >= static_cast<int>(counts.size()))
    throw ValidationError("dse: chosen phase out of range");
}

}  // namespace

EntropyMode entropy_mode_from_string(const std::string& text) {
  if (text == "softmax_dse") return EntropyMode::SoftmaxDse;
  if (text == "naive_dse") return EntropyMode::NaiveDse;
  if (text == "off") return EntropyMode::Off;
  throw ValidationError("reward: unknown entropy_mode '" + text + "'");
}

EnvMode env_mode_from_string(const std::string& text) {
  if (text == "queue_difference") return EnvMode::QueueDifference;
  if (text == "negative_queue") return EnvMode::NegativeQueue;
  throw ValidationError("reward: unknown env_mode '" + text + "'");
}

std::string to_string(EntropyMode mode) {
  switch (mode) {
    case EntropyMode::SoftmaxDse: return "softmax_dse";
    case EntropyMode::NaiveDse: return "naive_dse";
    case EntropyMode::Off: return "off";
  }
  return "off";
}

std::string to_string(EnvMode mode) {
  return mode == EnvMode::QueueDifference ? "queue_difference" : "negative_queue";
}

void RewardConfig::validate() const {
  if (!(temperature > 0.0)) throw ValidationError("reward: temperature must be > 0");
  if (!(kl_weight >= 0.0)) throw ValidationError("reward: kl_weight must be >= 0");
  if (!(entropy_weight >= 0.0)) throw ValidationError("reward: entropy_weight must be >= 0");
  if (!std::isfinite(hurdle)) throw ValidationError("reward: hurdle must be finite");
}

double env_reward(double queue_prev, double queue_curr, EnvMode mode) {
  return mode == EnvMode::QueueDifference ? queue_prev - queue_curr : -queue_curr;
}

double hurdle(double env, double hurdle_rate) { return env - hurdle_rate; }

double softmax_dse_prob(std::span<const int> counts, int chosen, double tau) {
  check_chosen(counts, chosen);
  if (!(tau > 0.0)) throw ValidationError("dse: temperature must be > 0");
  const double top = *std::max_element(counts.begin(), counts.end());
  double denom = 0.0;
  for (int c : counts) denom += std::exp((c - top) / tau);
  return std::exp((counts[static_cast<std::size_t>(chosen)] - top) / tau) / denom;
}

double naive_dse_prob(std::span<const int> counts, int chosen) {
  check_chosen(counts, chosen);
  long long total = 0;
  for (int c : counts) total += c;
  if (total < 1) throw ValidationError("dse: counts must sum to >= 1");
  return static_cast<double>(counts[static_cast<std::size_t>(chosen)]) /
         static_cast<double>(total);
}

double gated_entropy_reward(double p_chosen, double env, double hurdle_rate) {
  return env > hurdle_rate ? p_chosen : 0.0;
}

double total_reward(double env, double hurdle_rate, double entropy_weight, double entropy_reward) {
  return env - hurdle_rate + entropy_weight * entropy_reward;
}

double k3_kl(double logp_policy, double logp_ref) {
  const double log_ratio = logp_ref - logp_policy;
  return std::exp(log_ratio) - log_ratio - 1.0;
}

std::vector<double> assemble_token_rewards(double final_reward, double kl_weight,
                                           std::span<const double> policy_logprobs,
                                           std::span<const double> ref_logprobs) {
  if (policy_logprobs.size() != ref_logprobs.size())
    throw ValidationError("token rewards: policy and reference log-prob lengths differ");
  if (policy_logprobs.empty()) throw ValidationError("token rewards: empty trajectory");
  std::vector<double> r(policy_logprobs.size());
  for (std::size_t l = 0; l + 1 < r.size(); ++l)
    r[l] = -kl_weight * k3_kl(policy_logprobs[l], ref_logprobs[l]);
  r.back() = final_reward;
  return r;
}

RewardBundle decision_reward(const RewardConfig& config, double queue_prev, double queue_curr,
                             std::span<const int> counts, int chosen) {
  RewardBundle b;
  b.env = env_reward(queue_prev, queue_curr, config.env_mode);
  switch (config.entropy_mode) {
    case EntropyMode::NaiveDse: b.p_chosen = naive_dse_prob(counts, chosen); break;
    // Off still reports the softmax confidence for the decision log.
    case EntropyMode::SoftmaxDse:
    case EntropyMode::Off: b.p_chosen = softmax_dse_prob(counts, chosen, config.temperature); break;
  }
  b.gate_open = b.env > config.hurdle;
  b.entropy_reward = gated_entropy_reward(b.p_chosen, b.env, config.hurdle);
  const double weight = config.entropy_mode == EntropyMode::Off ? 0.0 : config.entropy_weight;
  b.total = total_reward(b.env, config.hurdle, weight, b.entropy_reward);
  return b;
}

}  // namespace tsc::reward
