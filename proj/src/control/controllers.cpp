#include "tsc/control/controllers.hpp"

#include <cmath>

#include "tsc/common/error.hpp"

namespace tsc::control {

int fixed_time(double t, double t_fixed, int num_phases) {
  if (!(t_fixed > 0.0)) throw ValidationError("fixed_time: t_fixed must be > 0");
  if (num_phases < 1) throw ValidationError("fixed_time: num_phases must be >= 1");
  const auto slot = static_cast<long long>(std::floor(t / t_fixed));
  const long long n = num_phases;
  return static_cast<int>(((slot % n) + n) % n);
}

int max_pressure(std::span<const sim::LaneObservation> observation,
                 const sim::Topology& topology) {
  if (static_cast<int>(observation.size()) != topology.num_lanes())
    throw ValidationError("max_pressure: observation must cover every lane");
  int best = 0;
  long long best_pressure = -1;
  for (const sim::PhaseSpec& p : topology.phases) {
    long long pressure = 0;
    for (int lane : p.allowed_lanes) pressure += observation[static_cast<std::size_t>(lane)].early_queued;
    if (pressure > best_pressure) {
      best_pressure = pressure;
      best = p.index;
    }
  }
  return best;
}

int random_policy(Rng& rng, int num_phases) {
  if (num_phases < 1) throw ValidationError("random_policy: num_phases must be >= 1");
  return uniform_index(rng, num_phases);
}

Kind kind_from_string(const std::string& text) {
  if (text == "policy") return Kind::Policy;
  if (text == "fixed") return Kind::FixedTime;
  if (text == "maxpressure") return Kind::MaxPressure;
  if (text == "random") return Kind::Random;
  throw ValidationError("controller: unknown kind '" + text +
                        "' (expected policy, fixed, maxpressure or random)");
}

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::Policy: return "policy";
    case Kind::FixedTime: return "fixed";
    case Kind::MaxPressure: return "maxpressure";
    case Kind::Random: return "random";
  }
  return "policy";
}

FixedTimeController::FixedTimeController(const sim::Topology& topology, double t_fixed)
    : num_phases_(topology.num_phases()), t_fixed_(t_fixed) {
  if (!(t_fixed > 0.0)) throw ValidationError("fixed_time: t_fixed must be > 0");
}

int FixedTimeController::decide(const Decision& d) { return fixed_time(d.time, t_fixed_, num_phases_); }

int MaxPressureController::decide(const Decision& d) { return max_pressure(d.observation, topology_); }

RandomController::RandomController(const sim::Topology& topology, std::uint64_t seed)
    : num_phases_(topology.num_phases()), rng_(derive_rng(seed, 0x7a11d0)) {}

int RandomController::decide(const Decision&) { return random_policy(rng_, num_phases_); }

}  // namespace tsc::control
