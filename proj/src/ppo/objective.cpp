#include "tsc/ppo/objective.hpp"

#include <algorithm>
#include <cmath>

#include "tsc/common/error.hpp"

namespace tsc::ppo {

std::vector<double> gae(std::span<const double> rewards, std::span<const double> values,
                        double gamma, double lambda) {
  if (rewards.size() != values.size())
    throw ValidationError("gae: rewards and values must have equal length");
  std::vector<double> adv(rewards.size());
  double next_value = 0.0;
  double running = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    const double delta = rewards[i] + gamma * next_value - values[i];
    running = delta + gamma * lambda * running;
    adv[i] = running;
    next_value = values[i];
  }
  return adv;
}

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  std::vector<double> out(rewards.size());
  double running = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    running = rewards[i] + gamma * running;
    out[i] = running;
  }
  return out;
}

void standardize(std::span<double> values) {
  if (values.empty()) return;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  const double sd = std::max(std::sqrt(var), 1e-8);
  for (double& v : values) v = (v - mean) / sd;
}

double policy_surrogate(double ratio, double advantage, double eps_low, double eps_high) {
  const double clipped = std::clamp(ratio, 1.0 - eps_low, 1.0 + eps_high);
  return std::min(ratio * advantage, clipped * advantage);
}

ValueLossMode value_loss_mode_from_string(const std::string& text) {
  if (text == "standard") return ValueLossMode::Standard;
  if (text == "literal") return ValueLossMode::Literal;
  throw ValidationError("trainer: unknown value_loss_mode '" + text + "'");
}

std::string to_string(ValueLossMode mode) {
  return mode == ValueLossMode::Standard ? "standard" : "literal";
}

double value_loss(std::span<const double> v_new, std::span<const double> v_old,
                  std::span<const double> returns, double eps, ValueLossMode mode) {
  if (v_new.size() != returns.size() || v_old.size() != returns.size())
    throw ValidationError("value_loss: vectors must be aligned");
  if (returns.empty()) throw ValidationError("value_loss: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < returns.size(); ++i) {
    const double d = v_new[i] - returns[i];
    double alt = 0.0;
    if (mode == ValueLossMode::Standard) {
      alt = v_old[i] + std::clamp(v_new[i] - v_old[i], -eps, eps) - returns[i];
    } else {
      alt = std::clamp(d, -eps, eps);
    }
    acc += std::max(d * d, alt * alt);
  }
  return 0.5 * acc / static_cast<double>(returns.size());
}

double total_loss(double policy_term, double value_term, double value_coef) {
  return -policy_term + value_coef * value_term;
}

nn::Var surrogate_graph(nn::Var ratio, const nn::Matrix& advantage, double eps_low,
                        double eps_high) {
  nn::Tape& t = *ratio.tape();
  nn::Var adv = t.constant(advantage);
  nn::Var unclipped = nn::mul(ratio, adv);
  nn::Var clipped = nn::mul(nn::clip(ratio, 1.0 - eps_low, 1.0 + eps_high), adv);
  return nn::minimum(unclipped, clipped);
}

nn::Var value_loss_graph(nn::Var v_new, const nn::Matrix& v_old, const nn::Matrix& returns,
                         double eps, ValueLossMode mode) {
  nn::Tape& t = *v_new.tape();
  nn::Var target = t.constant(returns);
  nn::Var diff = nn::sub(v_new, target);
  nn::Var alt;
  if (mode == ValueLossMode::Standard) {
    nn::Var old = t.constant(v_old);
    alt = nn::sub(nn::add(old, nn::clip(nn::sub(v_new, old), -eps, eps)), target);
  } else {
    alt = nn::clip(diff, -eps, eps);
  }
  return nn::scale(nn::mean(nn::maximum(nn::square(diff), nn::square(alt))), 0.5);
}

}  // namespace tsc::ppo
