#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tsc/nn/policy.hpp"
#include "tsc/ppo/objective.hpp"

namespace tsc::testing {

// Brute-force advantage: A_l = sum_k (gamma*lambda)^k delta_{l+k}, with
// every delta recomputed from scratch and V after the last token = 0.
std::vector<double> gae_double_sum(std::span<const double> rewards, std::span<const double> values,
                                   double gamma, double lambda);

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t parameters = 0;
  std::size_t checked = 0;
};

// Small random policy + value head, a PPO-shaped loss (clipped surrogate,
// full log-softmax term and clipped value regression), analytic gradients
// against central differences with step h on every parameter.
GradCheck gradient_check(std::uint64_t seed, double h = 1e-5);

// Relative error with a floor on the denominator for gradients that are
// numerically zero.
double relative_error(double analytic, double numeric);

}  // namespace tsc::testing
