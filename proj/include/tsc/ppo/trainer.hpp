#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <string>
#include <vector>

#include "tsc/common/rng.hpp"
#include "tsc/nn/policy.hpp"
#include "tsc/ppo/objective.hpp"

namespace tsc::ppo {

struct TrainerConfig {
  double actor_lr = 2.5e-5;
  double actor_weight_decay = 1e-6;
  double value_lr = 1e-5;
  double value_weight_decay = 5e-7;
  double clip_low = 0.2;
  double clip_high = 0.5;
  double value_clip = 0.2;
  double gamma = 0.999;
  double lambda = 0.95;
  double value_coef = 1.0;
  int batch_size = 8;
  int batches_per_update = 5;
  double grad_clip_policy = 0.5;
  double grad_clip_value = 5.0;
  int update_interval = 360;
  int buffer_window = 400;
  int checkpoint_interval = 720;
  int decision_interval = 10;
  int episode_length = 3600;
  int group_size = 8;  // G
  bool use_critic = true;
  // Draw the acting response separately from the G entropy samples.
  bool separate_action_sample = false;
  ValueLossMode value_loss_mode = ValueLossMode::Standard;

  void validate() const;
  // Non-fatal configuration smells, e.g. fewer samples than phases.
  std::vector<std::string> warnings(int num_phases) const;
};

// One buffered decision: everything the update needs, frozen at rollout.
struct Experience {
  std::int64_t time = 0;  // global timestep of the decision
  std::vector<double> features;
  std::vector<int> tokens;
  std::vector<double> old_logprobs;
  std::vector<double> rewards;  // per token
  double old_value = 0.0;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(int window) : window_(window) {}

  void push(Experience record);
  // Drops records older than now - window, oldest first.
  void evict(std::int64_t now);
  void clear() { records_.clear(); }

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::deque<Experience>& records() const { return records_; }
  int window() const { return window_; }

 private:
  int window_;
  std::deque<Experience> records_;
};

// Scales the tensors in place so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_global_norm(const std::vector<nn::Matrix*>& grads, double max_norm);
double global_norm(const std::vector<const nn::Matrix*>& grads);

// Adam with decoupled weight decay.
class AdamW {
 public:
  AdamW() = default;
  AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8);

  void step(const std::vector<nn::Matrix*>& params, const std::vector<const nn::Matrix*>& grads);

  double lr = 0.0;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t steps = 0;
  std::vector<nn::Matrix> m;
  std::vector<nn::Matrix> v;
};

struct UpdateStats {
  std::int64_t step = 0;
  double mean_ratio = 1.0;
  double clip_fraction = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double mean_advantage = 0.0;
  double grad_norm_policy = 0.0;
  double grad_norm_value = 0.0;
};

class TrainingLogWriter {
 public:
  explicit TrainingLogWriter(std::ostream& out, bool header = true);
  void write(const UpdateStats& stats);

 private:
  std::ostream* out_;
};

struct AdvantageTable {
  std::vector<std::vector<double>> advantages;
  std::vector<std::vector<double>> returns;
};

AdvantageTable compute_advantages(const ReplayBuffer& buffer, const TrainerConfig& config);

class Trainer {
 public:
  Trainer(TrainerConfig config, nn::PolicyParams policy, nn::ValueParams value);

  // One PPO update over the buffer. Throws on an empty buffer.
  UpdateStats update(const ReplayBuffer& buffer, Rng& rng);

  const TrainerConfig& config() const { return config_; }
  const nn::PolicyParams& policy() const { return policy_; }
  const nn::PolicyParams& reference() const { return reference_; }
  const nn::ValueParams& value() const { return value_; }
  nn::PolicyParams& mutable_policy() { return policy_; }
  nn::ValueParams& mutable_value() { return value_; }
  std::int64_t update_count() const { return update_count_; }

  const AdamW& actor_optimizer() const { return actor_; }
  const AdamW& critic_optimizer() const { return critic_; }

  // Restores full trainer state (used by checkpoint loading).
  void restore(nn::PolicyParams policy, nn::PolicyParams reference, nn::ValueParams value,
               AdamW actor, AdamW critic, std::int64_t update_count);

 private:
  TrainerConfig config_;
  nn::PolicyParams policy_;
  nn::PolicyParams reference_;
  nn::ValueParams value_;
  AdamW actor_;
  AdamW critic_;
  std::int64_t update_count_ = 0;
};

struct Checkpoint {
  std::string config_hash;
  std::string rng_state;
  std::int64_t global_step = 0;
  std::int64_t update_count = 0;
  nn::PolicyParams policy;
  nn::PolicyParams reference;
  nn::ValueParams value;
  AdamW actor;
  AdamW critic;
  // Buffered decisions still inside the window; needed to resume exactly.
  std::vector<Experience> buffer;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
// Throws IoError if unreadable and ValidationError if corrupt, of the wrong
// version, or (when expected_vocab > 0) built for a different vocabulary.
Checkpoint load_checkpoint(const std::string& path, int expected_vocab = 0);

// FNV-1a over the policy and value parameter bytes.
std::string content_hash(const nn::PolicyParams& policy, const nn::ValueParams& value);

}  // namespace tsc::ppo
