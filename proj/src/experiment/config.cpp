#include "tsc/experiment/config.hpp"

#include <fstream>
#include <set>

#include "tsc/common/error.hpp"
#include "tsc/common/hash.hpp"

namespace tsc::experiment {

using nlohmann::json;

namespace {

// Reads keys out of one JSON object and remembers which were used so that
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& doc, std::string name) : doc_(doc), name_(std::move(name)) {
    if (!doc_.is_object()) throw ValidationError("config: '" + name_ + "' must be an object");
  }

  template <class T>
  bool get(const char* key, T& out) {
    if (!doc_.contains(key)) return false;
    seen_.insert(key);
    try {
      out = doc_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError("config: '" + path(key) + "' has the wrong type");
    }
    return true;
  }

  const json* child(const char* key) {
    if (!doc_.contains(key)) return nullptr;
    seen_.insert(key);
    return &doc_.at(key);
  }

  std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  void finish() const {
    for (const auto& item : doc_.items())
      if (!seen_.count(item.key()))
        throw ValidationError("config: unknown key '" + path(item.key()) + "'");
  }

 private:
  const json& doc_;
  std::string name_;
  std::set<std::string> seen_;
};

sim::Topology parse_topology(const json& doc) {
  Section s(doc, "topology");
  sim::Topology t;
  s.get("approaches", t.approaches);
  s.get("yellow_duration", t.yellow_duration);
  s.get("jam_spacing", t.jam_spacing);
  if (const json* lanes = s.child("lanes")) {
    if (!lanes->is_array()) throw ValidationError("config: 'topology.lanes' must be an array");
    for (std::size_t i = 0; i < lanes->size(); ++i) {
      Section ls((*lanes)[i], "topology.lanes[" + std::to_string(i) + "]");
      sim::Lane lane;
      std::string approach, movement = "through";
      if (!ls.get("approach", approach))
        throw ValidationError("config: '" + ls.path("approach") + "' is required");
      ls.get("movement", movement);
      ls.get("road_length", lane.road_length);
      ls.get("free_flow_speed", lane.free_flow_speed);
      ls.get("saturation_headway", lane.saturation_headway);
      ls.get("label", lane.label);
      ls.finish();
      lane.movement = sim::movement_from_string(movement);
      int idx = -1;
      for (std::size_t a = 0; a < t.approaches.size(); ++a)
        if (t.approaches[a] == approach) idx = static_cast<int>(a);
      if (idx < 0)
        throw ValidationError("config: lane " + std::to_string(i) + " names unknown approach '" +
                              approach + "'");
      lane.approach = idx;
      if (lane.label.empty()) lane.label = approach + " " + movement;
      t.lanes.push_back(lane);
    }
  }
  if (const json* phases = s.child("phases")) {
    if (!phases->is_array()) throw ValidationError("config: 'topology.phases' must be an array");
    for (std::size_t i = 0; i < phases->size(); ++i) {
      Section ps((*phases)[i], "topology.phases[" + std::to_string(i) + "]");
      sim::PhaseSpec p;
      p.index = static_cast<int>(i);
      ps.get("mnemonic", p.mnemonic);
      ps.get("description", p.description);
      ps.get("allowed_lanes", p.allowed_lanes);
      ps.finish();
      t.phases.push_back(p);
    }
  }
  s.finish();
  return sim::build_topology(t);
}

json topology_to_json(const sim::Topology& t) {
  json lanes = json::array();
  for (const sim::Lane& l : t.lanes)
    lanes.push_back({{"approach", t.approaches[static_cast<std::size_t>(l.approach)]},
                     {"movement", sim::to_string(l.movement)},
                     {"road_length", l.road_length},
                     {"free_flow_speed", l.free_flow_speed},
                     {"saturation_headway", l.saturation_headway},
                     {"label", l.label}});
  json phases = json::array();
  for (const sim::PhaseSpec& p : t.phases)
    phases.push_back({{"mnemonic", p.mnemonic},
                      {"description", p.description},
                      {"allowed_lanes", p.allowed_lanes}});
  return {{"approaches", t.approaches},
          {"lanes", lanes},
          {"phases", phases},
          {"yellow_duration", t.yellow_duration},
          {"jam_spacing", t.jam_spacing}};
}

void parse_demand(const json& doc, DemandConfig& d) {
  Section s(doc, "demand");
  s.get("base_through", d.base_through);
  s.get("base_left", d.base_left);
  s.get("surge_factor", d.surge_factor);
  s.get("rng_stream", d.rng_stream);
  s.get("schedule", d.schedule);
  if (const json* windows = s.child("windows")) {
    if (!windows->is_array()) throw ValidationError("config: 'demand.windows' must be an array");
    for (std::size_t i = 0; i < windows->size(); ++i) {
      Section ws((*windows)[i], "demand.windows[" + std::to_string(i) + "]");
      sim::RateWindow w;
      ws.get("start", w.start);
      ws.get("end", w.end);
      ws.get("rates", w.rates);
      ws.finish();
      d.windows.push_back(w);
    }
  }
  s.finish();
}

void parse_trainer(const json& doc, ppo::TrainerConfig& c) {
  Section s(doc, "trainer");
  s.get("actor_lr", c.actor_lr);
  s.get("actor_weight_decay", c.actor_weight_decay);
  s.get("value_lr", c.value_lr);
  s.get("value_weight_decay", c.value_weight_decay);
  s.get("clip_low", c.clip_low);
  s.get("clip_high", c.clip_high);
  s.get("value_clip", c.value_clip);
  s.get("gamma", c.gamma);
  s.get("lambda", c.lambda);
  s.get("value_coef", c.value_coef);
  s.get("batch_size", c.batch_size);
  s.get("batches_per_update", c.batches_per_update);
  s.get("grad_clip_policy", c.grad_clip_policy);
  s.get("grad_clip_value", c.grad_clip_value);
  s.get("update_interval", c.update_interval);
  s.get("buffer_window", c.buffer_window);
  s.get("checkpoint_interval", c.checkpoint_interval);
  s.get("decision_interval", c.decision_interval);
  s.get("episode_length", c.episode_length);
  s.get("group_size", c.group_size);
  s.get("use_critic", c.use_critic);
  s.get("separate_action_sample", c.separate_action_sample);
  std::string mode;
  if (s.get("value_loss_mode", mode)) c.value_loss_mode = ppo::value_loss_mode_from_string(mode);
  s.finish();
}

void parse_reward(const json& doc, reward::RewardConfig& c) {
  Section s(doc, "reward");
  s.get("hurdle", c.hurdle);
  s.get("entropy_weight", c.entropy_weight);
  s.get("temperature", c.temperature);
  s.get("kl_weight", c.kl_weight);
  std::string text;
  if (s.get("entropy_mode", text)) c.entropy_mode = reward::entropy_mode_from_string(text);
  if (s.get("env_mode", text)) c.env_mode = reward::env_mode_from_string(text);
  s.finish();
}

void parse_policy(const json& doc, PolicyConfig& c) {
  Section s(doc, "policy");
  s.get("embed", c.embed);
  s.get("hidden", c.hidden);
  s.get("history", c.history);
  s.get("filler_count", c.filler_count);
  s.get("max_response", c.max_response);
  s.get("sampling_temperature", c.sampling_temperature);
  s.finish();
}

}  // namespace

void ExperimentConfig::validate() const {
  trainer.validate();
  reward.validate();
  if (episodes < 1) throw ValidationError("config: episodes must be >= 1");
  if (!(t_fixed > 0.0)) throw ValidationError("config: t_fixed must be > 0");
  if (policy.max_response < 1) throw ValidationError("config: policy.max_response must be >= 1");
  if (!(policy.sampling_temperature > 0.0))
    throw ValidationError("config: policy.sampling_temperature must be > 0");
  if (policy.filler_count < 0) throw ValidationError("config: policy.filler_count must be >= 0");
  const sim::Topology topo = topology();
  demand_profile(topo).validate(topo.num_lanes());
}

sim::Topology ExperimentConfig::topology() const {
  if (explicit_topology) return sim::build_topology(*explicit_topology);
  return sim::build_topology(sim::preset_from_string(topology_preset));
}

sim::DemandProfile ExperimentConfig::demand_profile(const sim::Topology& topology) const {
  sim::DemandProfile d =
      sim::default_demand(topology, static_cast<double>(trainer.episode_length), demand.base_through,
                          demand.base_left, demand.surge_factor);
  if (!demand.windows.empty()) d.windows = demand.windows;
  d.schedule = demand.schedule;
  d.rng_stream = demand.rng_stream;
  return d;
}

ExperimentConfig parse_config(const json& doc) {
  Section s(doc, "");
  ExperimentConfig c;
  if (!s.get("seed", c.seed)) throw ValidationError("config: 'seed' is required (no unseeded runs)");
  s.get("episodes", c.episodes);
  s.get("out", c.out);
  s.get("t_fixed", c.t_fixed);
  s.get("learn", c.learn);
  s.get("heldout_eval", c.heldout_eval);
  s.get("write_steps", c.write_steps);
  std::string controller;
  if (s.get("controller", controller)) c.controller = control::kind_from_string(controller);
  if (const json* t = s.child("topology")) {
    if (t->is_string()) {
      c.topology_preset = t->get<std::string>();
      sim::preset_from_string(c.topology_preset);
    } else if (t->is_object() && t->contains("preset")) {
      Section ts(*t, "topology");
      ts.get("preset", c.topology_preset);
      ts.finish();
      sim::preset_from_string(c.topology_preset);
    } else {
      c.explicit_topology = parse_topology(*t);
      c.topology_preset.clear();
    }
  }
  if (const json* d = s.child("demand")) parse_demand(*d, c.demand);
  if (const json* t = s.child("trainer")) parse_trainer(*t, c.trainer);
  if (const json* r = s.child("reward")) parse_reward(*r, c.reward);
  if (const json* p = s.child("policy")) parse_policy(*p, c.policy);
  s.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config: '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

json to_json(const ExperimentConfig& c) {
  json out;
  out["seed"] = c.seed;
  out["episodes"] = c.episodes;
  out["out"] = c.out;
  out["t_fixed"] = c.t_fixed;
  out["learn"] = c.learn;
  out["heldout_eval"] = c.heldout_eval;
  out["write_steps"] = c.write_steps;
  out["controller"] = control::to_string(c.controller);
  if (c.explicit_topology) {
    out["topology"] = topology_to_json(*c.explicit_topology);
  } else {
    out["topology"] = {{"preset", c.topology_preset}};
  }
  json windows = json::array();
  for (const sim::RateWindow& w : c.demand.windows)
    windows.push_back({{"start", w.start}, {"end", w.end}, {"rates", w.rates}});
  out["demand"] = {{"base_through", c.demand.base_through},
                   {"base_left", c.demand.base_left},
                   {"surge_factor", c.demand.surge_factor},
                   {"rng_stream", c.demand.rng_stream},
                   {"windows", windows},
                   {"schedule", c.demand.schedule}};
  const ppo::TrainerConfig& t = c.trainer;
  out["trainer"] = {{"actor_lr", t.actor_lr},
                    {"actor_weight_decay", t.actor_weight_decay},
                    {"value_lr", t.value_lr},
                    {"value_weight_decay", t.value_weight_decay},
                    {"clip_low", t.clip_low},
                    {"clip_high", t.clip_high},
                    {"value_clip", t.value_clip},
                    {"gamma", t.gamma},
                    {"lambda", t.lambda},
                    {"value_coef", t.value_coef},
                    {"batch_size", t.batch_size},
                    {"batches_per_update", t.batches_per_update},
                    {"grad_clip_policy", t.grad_clip_policy},
                    {"grad_clip_value", t.grad_clip_value},
                    {"update_interval", t.update_interval},
                    {"buffer_window", t.buffer_window},
                    {"checkpoint_interval", t.checkpoint_interval},
                    {"decision_interval", t.decision_interval},
                    {"episode_length", t.episode_length},
                    {"group_size", t.group_size},
                    {"use_critic", t.use_critic},
                    {"separate_action_sample", t.separate_action_sample},
                    {"value_loss_mode", ppo::to_string(t.value_loss_mode)}};
  const reward::RewardConfig& r = c.reward;
  out["reward"] = {{"hurdle", r.hurdle},
                   {"entropy_weight", r.entropy_weight},
                   {"temperature", r.temperature},
                   {"kl_weight", r.kl_weight},
                   {"entropy_mode", reward::to_string(r.entropy_mode)},
                   {"env_mode", reward::to_string(r.env_mode)}};
  const PolicyConfig& p = c.policy;
  out["policy"] = {{"embed", p.embed},
                   {"hidden", p.hidden},
                   {"history", p.history},
                   {"filler_count", p.filler_count},
                   {"max_response", p.max_response},
                   {"sampling_temperature", p.sampling_temperature}};
  return out;
}

std::string config_hash(const ExperimentConfig& config) {
  json doc = to_json(config);
  doc.erase("seed");
  doc.erase("out");
  // nlohmann::json objects iterate in sorted key order, so dump() is canonical.
  return fnv1a_hex(doc.dump());
}

}  // namespace tsc::experiment
