#pragma once

#include <span>
#include <string>
#include <vector>

#include "tsc/nn/autodiff.hpp"

namespace tsc::ppo {

// Reverse recursion A_l = delta_l + gamma*lambda*A_{l+1} with
// delta_l = r_l + gamma*V_{l+1} - V_l and V after the last token = 0.
std::vector<double> gae(std::span<const double> rewards, std::span<const double> values,
                        double gamma, double lambda);

// G_l = sum_k gamma^k r_{l+k}.
std::vector<double> discounted_returns(std::span<const double> rewards, double gamma);

// Mean 0, std 1 with the std floored at 1e-8 (population std).
void standardize(std::span<double> values);

// min(r*A, clip(r, 1-eps_low, 1+eps_high)*A).
double policy_surrogate(double ratio, double advantage, double eps_low, double eps_high);

enum class ValueLossMode { Standard, Literal };
ValueLossMode value_loss_mode_from_string(const std::string& text);
std::string to_string(ValueLossMode mode);

// Standard: 0.5*mean(max((V-G)^2, (V_old + clip(V-V_old, -e, e) - G)^2)).
// Literal:  0.5*mean(max((V-G)^2, clip(V-G, -e, e)^2)).
double value_loss(std::span<const double> v_new, std::span<const double> v_old,
                  std::span<const double> returns, double eps, ValueLossMode mode);

// -policy_term + value_coef * value_term.
double total_loss(double policy_term, double value_term, double value_coef);

// Graph forms used by the update; values mirror the scalar functions above.
nn::Var surrogate_graph(nn::Var ratio, const nn::Matrix& advantage, double eps_low,
                        double eps_high);
nn::Var value_loss_graph(nn::Var v_new, const nn::Matrix& v_old, const nn::Matrix& returns,
                         double eps, ValueLossMode mode);

}  // namespace tsc::ppo
