#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace tsc {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

// Independent generator for (seed, stream). Used wherever results must not
// depend on evaluation order, e.g. the G responses sampled for one decision.
Rng derive_rng(std::uint64_t seed, std::uint64_t stream);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Uniform in [0, 1) built from the raw 64-bit output so that draws are
// identical across standard library implementations.
double uniform01(Rng& rng);

// Uniform integer in [0, n).
int uniform_index(Rng& rng, int n);

// Knuth's multiplication method; demand rates per step are small.
int poisson(Rng& rng, double mean);

std::string serialize_rng(const Rng& rng);
Rng deserialize_rng(const std::string& text);

}  // namespace tsc
