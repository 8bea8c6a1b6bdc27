#pragma once

#include <memory>
#include <span>
#include <string>

#include "tsc/common/rng.hpp"
#include "tsc/sim/intersection.hpp"

namespace tsc::control {

// floor(t / t_fixed) mod num_phases.
int fixed_time(double t, double t_fixed, int num_phases);

// Phase with the largest sum of queued vehicles over its lanes; the lowest
// index wins ties. Downstream queues are taken as empty.
int max_pressure(std::span<const sim::LaneObservation> observation, const sim::Topology& topology);

// Uniform phase draw.
int random_policy(Rng& rng, int num_phases);

struct Decision {
  double time = 0.0;
  int current_phase = 0;
  std::span<const sim::LaneObservation> observation;
};

enum class Kind { Policy, FixedTime, MaxPressure, Random };
Kind kind_from_string(const std::string& text);
std::string to_string(Kind kind);

class Controller {
 public:
  virtual ~Controller() = default;
  virtual int decide(const Decision& decision) = 0;
  virtual Kind kind() const = 0;
};

class FixedTimeController : public Controller {
 public:
  FixedTimeController(const sim::Topology& topology, double t_fixed);
  int decide(const Decision& decision) override;
  Kind kind() const override { return Kind::FixedTime; }

 private:
  int num_phases_;
  double t_fixed_;
};

class MaxPressureController : public Controller {
 public:
  explicit MaxPressureController(const sim::Topology& topology) : topology_(topology) {}
  int decide(const Decision& decision) override;
  Kind kind() const override { return Kind::MaxPressure; }

 private:
  sim::Topology topology_;
};

class RandomController : public Controller {
 public:
  RandomController(const sim::Topology& topology, std::uint64_t seed);
  int decide(const Decision& decision) override;
  Kind kind() const override { return Kind::Random; }

 private:
  int num_phases_;
  Rng rng_;
};

}  // namespace tsc::control
