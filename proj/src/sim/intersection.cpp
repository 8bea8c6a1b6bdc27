#include "tsc/sim/intersection.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>
#include <sstream>

#include "tsc/common/error.hpp"

namespace tsc::sim {

namespace {

constexpr double kYellowEpsilon = 1e-9;

std::string fail(const std::string& invariant) { return "topology: " + invariant; }

Lane make_lane(int approach, Movement movement, std::string label) {
  Lane lane;
  lane.approach = approach;
  lane.movement = movement;
  lane.label = std::move(label);
  return lane;
}

}  // namespace

std::string to_string(Movement m) {
  switch (m) {
    case Movement::Through: return "through";
    case Movement::Left: return "left";
    case Movement::Right: return "right";
    case Movement::UTurn: return "u-turn";
  }
  return "through";
}

Movement movement_from_string(const std::string& text) {
  if (text == "through") return Movement::Through;
  if (text == "left") return Movement::Left;
  if (text == "right") return Movement::Right;
  if (text == "u-turn" || text == "uturn") return Movement::UTurn;
  throw ValidationError("lane movement must be one of through/left/right/u-turn, got '" + text +
                        "'");
}

void Topology::validate() const {
  if (lanes.empty()) throw ValidationError(fail("at least one lane is required"));
  if (phases.empty()) throw ValidationError(fail("at least one phase is required"));
  if (!(yellow_duration >= 0.0)) throw ValidationError(fail("yellow_duration must be >= 0"));
  if (!(jam_spacing >= 0.0)) throw ValidationError(fail("jam_spacing must be >= 0"));

  for (std::size_t i = 0; i < lanes.size(); ++i) {
    const Lane& lane = lanes[i];
    const std::string where = "lane " + std::to_string(i) + ": ";
    if (!(lane.road_length > 0.0)) throw ValidationError(fail(where + "road_length must be > 0"));
    if (!(lane.free_flow_speed > 0.0))
      throw ValidationError(fail(where + "free_flow_speed must be > 0"));
    if (!(lane.saturation_headway > 0.0))
      throw ValidationError(fail(where + "saturation_headway must be > 0"));
    if (lane.approach < 0 || lane.approach >= static_cast<int>(approaches.size()))
      throw ValidationError(fail(where + "approach index out of range"));
  }

  std::set<std::string> mnemonics;
  std::vector<bool> referenced(lanes.size(), false);
  for (std::size_t p = 0; p < phases.size(); ++p) {
    const PhaseSpec& phase = phases[p];
    const std::string where = "phase " + std::to_string(p) + ": ";
    if (phase.index != static_cast<int>(p))
      throw ValidationError(fail(where + "index must equal its position in the phase table"));
    if (phase.mnemonic.empty()) throw ValidationError(fail(where + "mnemonic must be nonempty"));
    if (!mnemonics.insert(phase.mnemonic).second)
      throw ValidationError(fail(where + "mnemonic '" + phase.mnemonic + "' is not unique"));
    if (phase.allowed_lanes.empty())
      throw ValidationError(fail(where + "every phase must reference at least one lane"));
    for (int lane : phase.allowed_lanes) {
      if (lane < 0 || lane >= num_lanes())
        throw ValidationError(fail(where + "references missing lane " + std::to_string(lane)));
      referenced[static_cast<std::size_t>(lane)] = true;
    }
  }
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    if (!referenced[i])
      throw ValidationError(
          fail("lane " + std::to_string(i) + " is not referenced by any phase"));
  }
}

Preset preset_from_string(const std::string& name) {
  if (name == "toy8") return Preset::Toy8;
  if (name == "toy4") return Preset::Toy4;
  throw ValidationError("topology preset must be toy8 or toy4, got '" + name + "'");
}

Topology build_topology(Preset preset) {
  Topology t;
  t.approaches = {"Northern", "Southern", "Eastern", "Western"};
  if (preset == Preset::Toy8) {
    for (int a = 0; a < 4; ++a) {
      t.lanes.push_back(make_lane(a, Movement::Through, t.approaches[a] + " through"));
      t.lanes.push_back(make_lane(a, Movement::Left, t.approaches[a] + " left-turn"));
    }
    // lanes: 0 NT, 1 NL, 2 ST, 3 SL, 4 ET, 5 EL, 6 WT, 7 WL
    t.phases = {
        {0, "NTST", "Northern and southern through lanes", {0, 2}},
        {1, "NLSL", "Northern and southern left-turn lanes", {1, 3}},
        {2, "NTNL", "Northern through and left-turn lanes", {0, 1}},
        {3, "STSL", "Southern through and left-turn lanes", {2, 3}},
        {4, "ETWT", "Eastern and western through lanes", {4, 6}},
        {5, "ELWL", "Eastern and western left-turn lanes", {5, 7}},
        {6, "ETEL", "Eastern through and left-turn lanes", {4, 5}},
        {7, "WTWL", "Western through and left-turn lanes", {6, 7}},
    };
  } else {
    for (int a = 0; a < 4; ++a) {
      t.lanes.push_back(make_lane(a, Movement::Left, t.approaches[a] + " U-turn and left-turn"));
      t.lanes.push_back(make_lane(a, Movement::Through, t.approaches[a] + " through"));
      t.lanes.push_back(make_lane(a, Movement::Right, t.approaches[a] + " right-turn"));
    }
    // lanes: 0-2 N, 3-5 S, 6-8 E, 9-11 W; each approach is (left, through, right)
    t.phases = {
        {0, "NUTRLSUTRL",
         "Northern and southern U-turn, through, right-turn and left-turn lanes",
         {0, 1, 2, 3, 4, 5}},
        {1, "NUTLSUTL", "Northern and southern U-turn, through, and left-turn lanes",
         {0, 1, 3, 4}},
        {2, "EUTRLWUTRL",
         "Eastern and western U-turn, through, right-turn and left-turn lanes",
         {6, 7, 8, 9, 10, 11}},
        {3, "EUTLWUTL", "Eastern and western U-turn, through, and left-turn lanes",
         {6, 7, 9, 10}},
    };
  }
  t.validate();
  return t;
}

Topology build_topology(Topology explicit_config) {
  explicit_config.validate();
  return explicit_config;
}

double DemandProfile::rate(int lane, double t) const {
  for (const RateWindow& w : windows) {
    if (t >= w.start && t < w.end) return w.rates[static_cast<std::size_t>(lane)];
  }
  return 0.0;
}

void DemandProfile::validate(int num_lanes) const {
  for (const RateWindow& w : windows) {
    if (!(w.end >= w.start)) throw ValidationError("demand: window end must be >= start");
    if (static_cast<int>(w.rates.size()) != num_lanes)
      throw ValidationError("demand: each window needs one rate per lane");
    for (double r : w.rates) {
      if (!(r >= 0.0)) throw ValidationError("demand: rates must be >= 0");
    }
  }
  if (!schedule.empty() && static_cast<int>(schedule.size()) != num_lanes)
    throw ValidationError("demand: schedule needs one spawn list per lane");
  for (const auto& times : schedule) {
    if (!std::is_sorted(times.begin(), times.end()))
      throw ValidationError("demand: spawn times must be nondecreasing per lane");
  }
}

DemandProfile default_demand(const Topology& topology, double episode_length,
                             double base_through, double base_left, double surge_factor) {
  std::vector<double> base;
  for (const Lane& lane : topology.lanes) {
    base.push_back(lane.movement == Movement::Through ? base_through : base_left);
  }
  std::vector<double> surge = base;
  for (double& r : surge) r *= surge_factor;

  const double third = episode_length / 3.0;
  DemandProfile d;
  d.windows = {{0.0, third, base}, {third, 2.0 * third, surge}, {2.0 * third, episode_length, base}};
  return d;
}

std::int64_t SimState::in_network() const {
  std::int64_t n = 0;
  for (const auto& lane : lanes) n += static_cast<std::int64_t>(lane.size());
  return n;
}

SimState initial_state(const Topology& topology) {
  SimState s;
  const auto n = static_cast<std::size_t>(topology.num_lanes());
  s.lanes.resize(n);
  s.departure_credit.assign(n, 0.0);
  s.schedule_cursor.assign(n, 0);
  return s;
}

void spawn(SimState& state, const Topology& topology, const DemandProfile& demand, double dt,
           Rng& rng) {
  const double t0 = state.time;
  const double t1 = state.time + dt;
  for (int l = 0; l < topology.num_lanes(); ++l) {
    const auto li = static_cast<std::size_t>(l);
    const Lane& lane = topology.lanes[li];
    int arrivals = poisson(rng, demand.rate(l, t0) * dt);
    if (li < demand.schedule.size()) {
      const auto& times = demand.schedule[li];
      std::size_t& cursor = state.schedule_cursor[li];
      while (cursor < times.size() && times[cursor] < t1) {
        if (times[cursor] >= t0) ++arrivals;
        ++cursor;
      }
    }
    for (int k = 0; k < arrivals; ++k) {
      Vehicle v;
      v.id = state.next_vehicle_id++;
      v.lane = l;
      v.position = lane.road_length;
      v.speed = lane.free_flow_speed;
      v.spawn_time = t0;
      state.lanes[li].push_back(v);
      ++state.injected_count;
    }
  }
}

void step(SimState& state, const Topology& topology, double dt) {
  std::vector<bool> served(static_cast<std::size_t>(topology.num_lanes()), false);
  if (!state.in_yellow()) {
    for (int l : topology.phases[static_cast<std::size_t>(state.active_phase)].allowed_lanes) {
      served[static_cast<std::size_t>(l)] = true;
    }
  }

  const double t_end = state.time + dt;
  int stopped = 0;
  for (int l = 0; l < topology.num_lanes(); ++l) {
    const auto li = static_cast<std::size_t>(l);
    const Lane& lane = topology.lanes[li];
    auto& queue = state.lanes[li];
    double& credit = state.departure_credit[li];

    if (served[li]) {
      const double per_step = dt / lane.saturation_headway;
      credit = std::min(credit + per_step, std::max(1.0, per_step));
    } else {
      credit = 0.0;
    }

    while (served[li] && !queue.empty() && credit >= 1.0 &&
           queue.front().position - lane.free_flow_speed * dt <= 0.0) {
      Vehicle v = queue.front();
      queue.pop_front();
      v.position = 0.0;
      v.speed = lane.free_flow_speed;
      v.completion_time = t_end;
      state.completed.push_back(v);
      credit -= 1.0;
    }

    double limit = 0.0;
    for (Vehicle& v : queue) {
      const double target = v.position - lane.free_flow_speed * dt;
      const double next = std::min(v.position, std::max(target, limit));
      v.speed = (v.position - next) / dt;
      v.position = next;
      limit = next + topology.jam_spacing;
      if (v.speed < kQueuedSpeed) ++stopped;
    }
  }

  state.queue_sum += static_cast<double>(stopped) / topology.num_lanes();
  ++state.queue_samples;

  if (state.in_yellow()) {
    state.yellow_remaining -= dt;
    if (state.yellow_remaining <= kYellowEpsilon) {
      state.yellow_remaining = 0.0;
      state.active_phase = state.pending_phase.value_or(state.active_phase);
      state.pending_phase.reset();
    }
  }
  state.time = t_end;
}

void set_phase(SimState& state, const Topology& topology, int phase_index) {
  if (phase_index < 0 || phase_index >= topology.num_phases())
    throw ValidationError("set_phase: phase index " + std::to_string(phase_index) +
                          " out of range [0, " + std::to_string(topology.num_phases()) + ")");
  if (state.in_yellow()) {
    state.pending_phase = phase_index;
    return;
  }
  if (phase_index == state.active_phase) return;
  if (topology.yellow_duration <= 0.0) {
    state.active_phase = phase_index;
    return;
  }
  state.pending_phase = phase_index;
  state.yellow_remaining = topology.yellow_duration;
}

std::vector<LaneObservation> observe(const SimState& state, const Topology& topology) {
  std::vector<LaneObservation> obs(static_cast<std::size_t>(topology.num_lanes()));
  for (int l = 0; l < topology.num_lanes(); ++l) {
    const auto li = static_cast<std::size_t>(l);
    const double length = topology.lanes[li].road_length;
    LaneObservation& o = obs[li];
    for (const Vehicle& v : state.lanes[li]) {
      if (v.speed < kQueuedSpeed) {
        ++o.early_queued;
      } else if (v.position <= 0.10 * length) {
        ++o.seg1;
      } else if (v.position <= 0.33 * length) {
        ++o.seg2;
      } else {
        ++o.seg3;
      }
    }
  }
  return obs;
}

double queue_length(const SimState& state, const Topology& topology) {
  int stopped = 0;
  for (const auto& lane : state.lanes) {
    for (const Vehicle& v : lane) {
      if (v.speed < kQueuedSpeed) ++stopped;
    }
  }
  return static_cast<double>(stopped) / topology.num_lanes();
}

Metrics finalize_metrics(const SimState& state, const Topology& topology) {
  Metrics m;
  m.throughput = static_cast<std::int64_t>(state.completed.size());
  m.injected = state.injected_count;
  m.queue_length =
      state.queue_samples > 0 ? state.queue_sum / static_cast<double>(state.queue_samples) : 0.0;
  if (state.completed.empty()) return m;

  double travel = 0.0;
  double delay = 0.0;
  double ratio = 0.0;
  for (const Vehicle& v : state.completed) {
    const Lane& lane = topology.lanes[static_cast<std::size_t>(v.lane)];
    const double actual = *v.completion_time - v.spawn_time;
    const double free_flow = lane.road_length / lane.free_flow_speed;
    travel += actual;
    delay += actual - free_flow;
    ratio += actual > 0.0 ? (actual - free_flow) / actual : 0.0;
  }
  const double n = static_cast<double>(state.completed.size());
  m.travel_time = travel / n;
  m.delay_seconds = delay / n;
  m.delay_ratio = ratio / n;
  return m;
}

StepCsvWriter::StepCsvWriter(std::ostream& out) : out_(&out) {
  *out_ << "time,phase,queue,injected,completed\n";
}

void StepCsvWriter::write(const SimState& state, const Topology& topology) {
  std::ostringstream row;
  row.precision(17);
  row << state.time << ',' << state.active_phase << ',' << queue_length(state, topology) << ','
      << state.injected_count << ',' << state.completed.size() << '\n';
  *out_ << row.str();
}

Intersection::Intersection(Topology topology, DemandProfile demand, std::uint64_t seed)
    : topology_(std::move(topology)),
      demand_(std::move(demand)),
      state_(initial_state(topology_)),
      rng_(derive_rng(seed, demand_.rng_stream)) {
  topology_.validate();
  demand_.validate(topology_.num_lanes());
}

void Intersection::advance(double dt) {
  if (!(dt > 0.0)) throw ValidationError("advance: dt must be > 0");
  spawn(state_, topology_, demand_, dt, rng_);
  step(state_, topology_, dt);
}

}  // namespace tsc::sim
