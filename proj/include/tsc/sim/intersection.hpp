#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsc/common/rng.hpp"

namespace tsc::sim {

enum class Movement { Through, Left, Right, UTurn };

std::string to_string(Movement m);
Movement movement_from_string(const std::string& text);

struct Lane {
  int approach = 0;
  Movement movement = Movement::Through;
  double road_length = 300.0;       // m
  double free_flow_speed = 10.0;    // m/s
  double saturation_headway = 2.0;  // s per departing vehicle
  std::string label;                // e.g. "Eastern through"
};

struct PhaseSpec {
  int index = 0;
  std::string mnemonic;
  std::string description;
  std::vector<int> allowed_lanes;
};

struct Topology {
  std::vector<std::string> approaches;
  std::vector<Lane> lanes;
  std::vector<PhaseSpec> phases;
  double yellow_duration = 5.0;  // s
  double jam_spacing = 7.5;      // m between stopped vehicles

  int num_lanes() const { return static_cast<int>(lanes.size()); }
  int num_phases() const { return static_cast<int>(phases.size()); }

  // Throws ValidationError naming the first violated invariant.
  void validate() const;
};

enum class Preset { Toy8, Toy4 };

Preset preset_from_string(const std::string& name);

// toy8: four approaches x {through, left}, eight phases.
// toy4: four approaches x {left/U-turn, through, right}, four combined phases.
Topology build_topology(Preset preset);

// Validates and returns an explicitly configured topology.
Topology build_topology(Topology explicit_config);

struct Vehicle {
  std::int64_t id = 0;
  int lane = 0;
  double position = 0.0;  // m from stop line
  double speed = 0.0;     // m/s
  double spawn_time = 0.0;
  std::optional<double> completion_time;
};

struct LaneObservation {
  int early_queued = 0;
  int seg1 = 0;
  int seg2 = 0;
  int seg3 = 0;

  int total() const { return early_queued + seg1 + seg2 + seg3; }
  bool operator==(const LaneObservation&) const = default;
};

// Vehicles slower than this are counted as queued.
inline constexpr double kQueuedSpeed = 0.1;

// Piecewise-constant Poisson rates per lane plus an optional explicit
// spawn schedule. Windows are half-open [start, end); outside every window
// the rate is zero.
struct RateWindow {
  double start = 0.0;
  double end = 0.0;
  std::vector<double> rates;  // vehicles/s, one per lane
};

struct DemandProfile {
  std::vector<RateWindow> windows;
  std::vector<std::vector<double>> schedule;  // per-lane spawn times
  std::uint64_t rng_stream = 0;

  double rate(int lane, double t) const;
  void validate(int num_lanes) const;
};

// Default toy demand: base Poisson inflow with a surge in the middle third.
DemandProfile default_demand(const Topology& topology, double episode_length = 3600.0,
                             double base_through = 0.05, double base_left = 0.03,
                             double surge_factor = 1.8);

struct SimState {
  double time = 0.0;
  int active_phase = 0;
  std::optional<int> pending_phase;
  double yellow_remaining = 0.0;
  // Front of each deque is the vehicle nearest the stop line.
  std::vector<std::deque<Vehicle>> lanes;
  std::vector<Vehicle> completed;
  std::int64_t injected_count = 0;

  std::vector<double> departure_credit;
  std::vector<std::size_t> schedule_cursor;
  std::int64_t next_vehicle_id = 0;
  double queue_sum = 0.0;
  std::int64_t queue_samples = 0;

  std::int64_t in_network() const;
  bool in_yellow() const { return yellow_remaining > 0.0; }
};

SimState initial_state(const Topology& topology);

// Adds arrivals for the window [state.time, state.time + dt). Spawned
// vehicles enter at road_length moving at free-flow speed.
void spawn(SimState& state, const Topology& topology, const DemandProfile& demand, double dt,
           Rng& rng);

// Point-queue kinematics for one interval; advances time by dt.
void step(SimState& state, const Topology& topology, double dt = 1.0);

// Requests a phase. Same phase as active is a no-op; otherwise a yellow
// interval of yellow_duration is inserted before the new phase takes over.
void set_phase(SimState& state, const Topology& topology, int phase_index);

std::vector<LaneObservation> observe(const SimState& state, const Topology& topology);

// Instantaneous lane-average of queued vehicles.
double queue_length(const SimState& state, const Topology& topology);

struct Metrics {
  std::optional<double> travel_time;
  double queue_length = 0.0;  // mean over lanes and timesteps
  std::optional<double> delay_seconds;
  std::optional<double> delay_ratio;
  std::int64_t throughput = 0;
  std::int64_t injected = 0;
};

Metrics finalize_metrics(const SimState& state, const Topology& topology);

// Per-step CSV stream: time,phase,queue,injected,completed
class StepCsvWriter {
 public:
  explicit StepCsvWriter(std::ostream& out);
  void write(const SimState& state, const Topology& topology);

 private:
  std::ostream* out_;
};

// Convenience bundle that owns topology, demand, state and the arrival rng.
class Intersection {
 public:
  Intersection(Topology topology, DemandProfile demand, std::uint64_t seed);

  // spawn + step for one interval.
  void advance(double dt = 1.0);
  void set_phase(int phase_index) { sim::set_phase(state_, topology_, phase_index); }
  std::vector<LaneObservation> observe() const { return sim::observe(state_, topology_); }
  double queue_length() const { return sim::queue_length(state_, topology_); }
  Metrics metrics() const { return finalize_metrics(state_, topology_); }

  const Topology& topology() const { return topology_; }
  const SimState& state() const { return state_; }
  SimState& mutable_state() { return state_; }

 private:
  Topology topology_;
  DemandProfile demand_;
  SimState state_;
  Rng rng_;
};

}  // namespace tsc::sim
