#include "tsc/ppo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "tsc/common/error.hpp"

namespace tsc::ppo {

void TrainerConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ValidationError("trainer: " + what);
  };
  need(clip_low > 0.0 && clip_high > 0.0, "clip_low and clip_high must be > 0");
  need(clip_low < 1.0, "clip_low must be < 1");
  need(value_clip > 0.0, "value_clip must be > 0");
  need(gamma >= 0.0 && gamma <= 1.0, "gamma must be in [0, 1]");
  need(lambda >= 0.0 && lambda <= 1.0, "lambda must be in [0, 1]");
  need(value_coef >= 0.0, "value_coef must be >= 0");
  need(actor_lr >= 0.0 && value_lr >= 0.0, "learning rates must be >= 0");
  need(actor_weight_decay >= 0.0 && value_weight_decay >= 0.0, "weight decay must be >= 0");
  need(batch_size >= 1 && batches_per_update >= 1, "batch_size and batches_per_update must be >= 1");
  need(grad_clip_policy > 0.0 && grad_clip_value > 0.0, "gradient clip norms must be > 0");
  need(decision_interval >= 1, "decision_interval must be >= 1");
  need(episode_length >= decision_interval, "episode_length must be >= decision_interval");
  need(update_interval >= 1 && buffer_window >= 1 && checkpoint_interval >= 1,
       "update_interval, buffer_window and checkpoint_interval must be >= 1");
  need(group_size >= 1, "group_size must be >= 1");
}

std::vector<std::string> TrainerConfig::warnings(int num_phases) const {
  std::vector<std::string> out;
  if (group_size < num_phases)
    out.push_back("group_size " + std::to_string(group_size) + " is below the phase count " +
                  std::to_string(num_phases) + "; entropy estimates will be coarse");
  if (update_interval % decision_interval != 0)
    out.push_back("update_interval is not a multiple of decision_interval");
  return out;
}

void ReplayBuffer::push(Experience record) {
  if (!records_.empty() && record.time < records_.back().time)
    throw ValidationError("replay buffer: records must arrive in time order");
  records_.push_back(std::move(record));
}

void ReplayBuffer::evict(std::int64_t now) {
  while (!records_.empty() && records_.front().time < now - window_) records_.pop_front();
}

double global_norm(const std::vector<const nn::Matrix*>& grads) {
  double sq = 0.0;
  for (const nn::Matrix* g : grads) sq += g->squaredNorm();
  return std::sqrt(sq);
}

double clip_global_norm(const std::vector<nn::Matrix*>& grads, double max_norm) {
  double sq = 0.0;
  for (const nn::Matrix* g : grads) sq += g->squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (nn::Matrix* g : grads) *g *= s;
  }
  return norm;
}

AdamW::AdamW(double lr_, double weight_decay_, double beta1_, double beta2_, double eps_)
    : lr(lr_), weight_decay(weight_decay_), beta1(beta1_), beta2(beta2_), eps(eps_) {}

void AdamW::step(const std::vector<nn::Matrix*>& params,
                 const std::vector<const nn::Matrix*>& grads) {
  if (params.size() != grads.size()) throw ValidationError("adamw: parameter/gradient count mismatch");
  if (m.empty()) {
    for (const nn::Matrix* p : params) {
      m.push_back(nn::Matrix::Zero(p->rows(), p->cols()));
      v.push_back(nn::Matrix::Zero(p->rows(), p->cols()));
    }
  }
  if (m.size() != params.size()) throw ValidationError("adamw: state does not match parameters");
  ++steps;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
  for (std::size_t i = 0; i < params.size(); ++i) {
    nn::Matrix& p = *params[i];
    const nn::Matrix& g = *grads[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g.cwiseProduct(g);
    p -= lr * weight_decay * p;
    p.array() -= lr * (m[i].array() / bc1) / ((v[i].array() / bc2).sqrt() + eps);
  }
}

TrainingLogWriter::TrainingLogWriter(std::ostream& out, bool header) : out_(&out) {
  if (header)
    *out_ << "step,mean_ratio,clip_fraction,policy_loss,value_loss,mean_advantage,"
             "grad_norm_policy,grad_norm_value\n";
  out_->precision(17);
}

void TrainingLogWriter::write(const UpdateStats& s) {
  *out_ << s.step << ',' << s.mean_ratio << ',' << s.clip_fraction << ',' << s.policy_loss << ','
        << s.value_loss << ',' << s.mean_advantage << ',' << s.grad_norm_policy << ','
        << s.grad_norm_value << '\n';
}

AdvantageTable compute_advantages(const ReplayBuffer& buffer, const TrainerConfig& config) {
  AdvantageTable table;
  for (const Experience& e : buffer.records()) {
    if (config.use_critic) {
      // The critic is state-only, so V_old is shared by every token.
      const std::vector<double> values(e.rewards.size(), e.old_value);
      std::vector<double> adv = gae(e.rewards, values, config.gamma, config.lambda);
      std::vector<double> ret(adv.size());
      for (std::size_t i = 0; i < adv.size(); ++i) ret[i] = adv[i] + e.old_value;
      table.advantages.push_back(std::move(adv));
      table.returns.push_back(std::move(ret));
    } else {
      std::vector<double> ret = discounted_returns(e.rewards, config.gamma);
      table.advantages.push_back(ret);
      table.returns.push_back(std::move(ret));
    }
  }
  return table;
}

Trainer::Trainer(TrainerConfig config, nn::PolicyParams policy, nn::ValueParams value)
    : config_(std::move(config)),
      policy_(std::move(policy)),
      reference_(nn::snapshot_reference(policy_)),
      value_(std::move(value)),
      actor_(config_.actor_lr, config_.actor_weight_decay),
      critic_(config_.value_lr, config_.value_weight_decay) {
  config_.validate();
}

void Trainer::restore(nn::PolicyParams policy, nn::PolicyParams reference, nn::ValueParams value,
                      AdamW actor, AdamW critic, std::int64_t update_count) {
  policy_ = std::move(policy);
  reference_ = std::move(reference);
  value_ = std::move(value);
  actor_ = std::move(actor);
  critic_ = std::move(critic);
  update_count_ = update_count;
}

UpdateStats Trainer::update(const ReplayBuffer& buffer, Rng& rng) {
  if (buffer.empty()) throw ValidationError("update: replay buffer is empty");
  const auto& records = buffer.records();
  const AdvantageTable table = compute_advantages(buffer, config_);
  const std::size_t n = records.size();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, static_cast<int>(i)));
    std::swap(order[i - 1], order[j]);
  }
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(config_.batch_size), n);

  UpdateStats stats;
  stats.mean_ratio = 0.0;
  std::size_t cursor = 0;
  for (int b = 0; b < config_.batches_per_update; ++b) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < batch; ++i) members.push_back(order[(cursor++) % n]);

    std::size_t tokens = 0;
    for (std::size_t r : members) tokens += records[r].tokens.size();
    const auto rows = static_cast<Eigen::Index>(tokens);
    const auto feat = static_cast<Eigen::Index>(records[members.front()].features.size());

    nn::Matrix old_lp(rows, 1), adv(rows, 1), ret(rows, 1), v_old(rows, 1), token_feats(rows, feat);
    std::vector<double> raw_adv;
    raw_adv.reserve(tokens);
    Eigen::Index row = 0;
    for (std::size_t r : members) {
      const Experience& e = records[r];
      const nn::Matrix f = nn::features_row(e.features);
      for (std::size_t l = 0; l < e.tokens.size(); ++l, ++row) {
        old_lp(row, 0) = e.old_logprobs[l];
        raw_adv.push_back(table.advantages[r][l]);
        ret(row, 0) = table.returns[r][l];
        v_old(row, 0) = config_.use_critic ? e.old_value : 0.0;
        token_feats.row(row) = f;
      }
    }
    double adv_mean = 0.0;
    for (double a : raw_adv) adv_mean += a;
    adv_mean /= static_cast<double>(raw_adv.size());
    if (config_.use_critic) standardize(raw_adv);
    for (Eigen::Index i = 0; i < rows; ++i) adv(i, 0) = raw_adv[static_cast<std::size_t>(i)];

    nn::GradientBundle grads = nn::GradientBundle::zeros(policy_, value_);
    nn::Tape tape;
    nn::PolicyGraph pg(tape, policy_, &grads.policy);
    std::vector<nn::Var> parts;
    for (std::size_t r : members) parts.push_back(pg.logprobs(records[r].features, records[r].tokens));
    nn::Var new_lp = nn::concat_rows(parts);
    nn::Var ratio = nn::exp(nn::sub(new_lp, tape.constant(old_lp)));
    nn::Var policy_term = nn::mean(surrogate_graph(ratio, adv, config_.clip_low, config_.clip_high));
    nn::Var loss = nn::scale(policy_term, -1.0);
    double vloss = 0.0;
    if (config_.use_critic) {
      nn::ValueGraph vg(tape, value_, &grads.value);
      nn::Var v_new = vg.values(token_feats);
      nn::Var vl = value_loss_graph(v_new, v_old, ret, config_.value_clip, config_.value_loss_mode);
      vloss = vl.scalar();
      loss = nn::add(loss, nn::scale(vl, config_.value_coef));
    }
    tape.backward(loss);

    const nn::Matrix& rv = ratio.value();
    const double lo = 1.0 - config_.clip_low, hi = 1.0 + config_.clip_high;
    const double clipped = (rv.array() < lo || rv.array() > hi).cast<double>().sum();

    stats.mean_ratio += rv.mean();
    stats.clip_fraction += clipped / static_cast<double>(rows);
    stats.policy_loss += -policy_term.scalar();
    stats.value_loss += vloss;
    stats.mean_advantage += adv_mean;
    stats.grad_norm_policy += clip_global_norm(grads.policy.tensors(), config_.grad_clip_policy);

    const auto& gp = grads.policy;
    actor_.step(policy_.tensors(), gp.tensors());
    if (config_.use_critic) {
      stats.grad_norm_value += clip_global_norm(grads.value.tensors(), config_.grad_clip_value);
      const auto& gv = grads.value;
      critic_.step(value_.tensors(), gv.tensors());
    }
  }
  const double nb = static_cast<double>(config_.batches_per_update);
  stats.mean_ratio /= nb;
  stats.clip_fraction /= nb;
  stats.policy_loss /= nb;
  stats.value_loss /= nb;
  stats.mean_advantage /= nb;
  stats.grad_norm_policy /= nb;
  stats.grad_norm_value /= nb;
  stats.step = ++update_count_;
  return stats;
}

}  // namespace tsc::ppo
