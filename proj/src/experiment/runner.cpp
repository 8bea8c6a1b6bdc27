#include "tsc/experiment/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include "tsc/common/error.hpp"
#include "tsc/control/controllers.hpp"
#include "tsc/reward/reward.hpp"

namespace tsc::experiment {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kUpdateStream = 0x0bda7e;
constexpr std::uint64_t kHeldoutEpisode = 1'000'003;

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json to_json(const DecisionRecord& r) {
  json out;
  out["time"] = r.time;
  out["chosen_phase"] = r.chosen_phase;
  out["counts"] = r.counts.empty() ? json(nullptr) : json(r.counts);
  out["p_chosen"] = optional_json(r.p_chosen);
  out["R_env"] = r.env;
  out["R_total"] = r.total;
  out["gate_open"] = r.gate_open;
  return out;
}

DecisionRecord decision_from_json(const json& doc) {
  try {
    DecisionRecord r;
    r.time = doc.at("time").get<double>();
    r.chosen_phase = doc.at("chosen_phase").get<int>();
    if (!doc.at("counts").is_null()) r.counts = doc.at("counts").get<std::vector<int>>();
    if (!doc.at("p_chosen").is_null()) r.p_chosen = doc.at("p_chosen").get<double>();
    r.env = doc.at("R_env").get<double>();
    r.total = doc.at("R_total").get<double>();
    r.gate_open = doc.at("gate_open").get<bool>();
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("decision log: malformed record: ") + e.what());
  }
}

Histogram reward_histogram(std::span<const double> env_rewards, double hurdle, double bin_width) {
  if (!(bin_width > 0.0)) throw ValidationError("reward histogram: bin width must be > 0");
  Histogram h;
  h.bin_width = bin_width;
  h.hurdle = hurdle;
  int above = 0;
  for (double r : env_rewards) {
    ++h.bins[static_cast<long long>(std::floor(r / bin_width))];
    if (r > hurdle) ++above;
  }
  h.decisions = static_cast<int>(env_rewards.size());
  h.fraction_above = h.decisions ? static_cast<double>(above) / h.decisions : 0.0;
  return h;
}

Histogram reward_histogram(const std::string& jsonl_path, double hurdle, double bin_width) {
  std::ifstream in(jsonl_path);
  if (!in) throw IoError("reward histogram: cannot open '" + jsonl_path + "'");
  std::vector<double> rewards;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error&) {
      throw ValidationError("reward histogram: line " + std::to_string(line_no) + " of '" +
                            jsonl_path + "' is not valid JSON");
    }
    if (!doc.is_object() || !doc.contains("R_env") || !doc.at("R_env").is_number())
      throw ValidationError("reward histogram: line " + std::to_string(line_no) + " of '" +
                            jsonl_path + "' has no numeric R_env");
    rewards.push_back(doc.at("R_env").get<double>());
  }
  return reward_histogram(rewards, hurdle, bin_width);
}

json to_json(const Histogram& h) {
  json bins = json::array();
  for (const auto& [bin, count] : h.bins)
    bins.push_back({{"lower", static_cast<double>(bin) * h.bin_width},
                    {"upper", static_cast<double>(bin + 1) * h.bin_width},
                    {"count", count}});
  return {{"bin_width", h.bin_width},
          {"decisions", h.decisions},
          {"hurdle", h.hurdle},
          {"fraction_above_hurdle", h.fraction_above},
          {"bins", bins}};
}

EpisodeSeeds EpisodeSeeds::training(std::uint64_t run_seed, int episode) {
  const std::uint64_t base = derive_seed(run_seed, static_cast<std::uint64_t>(episode));
  return {derive_seed(base, 1), derive_seed(base, 2), derive_seed(base, 3)};
}

EpisodeSeeds EpisodeSeeds::heldout(std::uint64_t run_seed) {
  return training(run_seed, static_cast<int>(kHeldoutEpisode));
}

Session::Session(ExperimentConfig config)
    : config_(std::move(config)),
      topology_(config_.topology()),
      demand_(config_.demand_profile(topology_)),
      vocab_(topology_, config_.policy.filler_count),
      hash_(config_hash(config_)),
      buffer_(config_.trainer.buffer_window),
      update_rng_(derive_rng(config_.seed, kUpdateStream)) {
  config_.validate();
  if (config_.controller == control::Kind::Policy) {
    nn::PolicyDims dims;
    dims.vocab = vocab_.size();
    dims.features = static_cast<int>(lang::feature_length(topology_));
    dims.embed = config_.policy.embed;
    dims.hidden = config_.policy.hidden;
    dims.history = config_.policy.history;
    Rng init = derive_rng(config_.seed, kInitStream);
    nn::PolicyParams policy = nn::init_policy(dims, init);
    nn::ValueParams value = nn::init_value(dims.features, init);
    trainer_.emplace(config_.trainer, std::move(policy), std::move(value));
  }
}

const ppo::Trainer& Session::trainer() const {
  if (!trainer_) throw ValidationError("session: controller has no trainable policy");
  return *trainer_;
}

ppo::Trainer& Session::mutable_trainer() {
  if (!trainer_) throw ValidationError("session: controller has no trainable policy");
  return *trainer_;
}

ppo::Checkpoint Session::make_checkpoint() const {
  const ppo::Trainer& t = trainer();
  ppo::Checkpoint c;
  c.config_hash = hash_;
  c.rng_state = serialize_rng(update_rng_);
  c.global_step = global_step_;
  c.update_count = t.update_count();
  c.policy = t.policy();
  c.reference = t.reference();
  c.value = t.value();
  c.actor = t.actor_optimizer();
  c.critic = t.critic_optimizer();
  c.buffer.assign(buffer_.records().begin(), buffer_.records().end());
  return c;
}

void Session::save_checkpoint(const std::string& path) const {
  ppo::save_checkpoint(path, make_checkpoint());
}

void Session::load_checkpoint(const std::string& path) {
  ppo::Trainer& t = mutable_trainer();
  ppo::Checkpoint c = ppo::load_checkpoint(path, vocab_.size());
  if (c.policy.dims.features != t.policy().dims.features ||
      c.policy.dims.embed != t.policy().dims.embed ||
      c.policy.dims.hidden != t.policy().dims.hidden ||
      c.policy.dims.history != t.policy().dims.history)
    throw ValidationError("checkpoint: '" + path + "' was built for different policy dimensions");
  t.restore(std::move(c.policy), std::move(c.reference), std::move(c.value), std::move(c.actor),
            std::move(c.critic), c.update_count);
  update_rng_ = deserialize_rng(c.rng_state);
  global_step_ = c.global_step;
  buffer_.clear();
  for (ppo::Experience& e : c.buffer) buffer_.push(std::move(e));
}

std::vector<int> Session::greedy_response(std::span<const double> features) const {
  Rng rng(0);
  return nn::sample_response(trainer().policy(), features, 1e-6, config_.policy.max_response,
                             vocab_.eos(), rng)
      .tokens;
}

EpisodeReport Session::run_episode(int episode, bool learn, const EpisodeSeeds& seeds,
                                   const std::string& tag) {
  const auto started = std::chrono::steady_clock::now();
  learn = learn && trainer_.has_value();
  const ppo::TrainerConfig& tc = config_.trainer;
  const int horizon = tc.episode_length;
  const int every = tc.decision_interval;
  const std::int64_t base = static_cast<std::int64_t>(episode) * horizon;

  sim::Intersection sim(topology_, demand_, seeds.arrivals);
  std::unique_ptr<control::Controller> baseline;
  switch (config_.controller) {
    case control::Kind::FixedTime:
      baseline = std::make_unique<control::FixedTimeController>(topology_, config_.t_fixed);
      break;
    case control::Kind::MaxPressure:
      baseline = std::make_unique<control::MaxPressureController>(topology_);
      break;
    case control::Kind::Random:
      baseline = std::make_unique<control::RandomController>(topology_, seeds.controller);
      break;
    case control::Kind::Policy:
      break;
  }

  EpisodeReport report;
  report.episode = episode;
  std::ofstream decisions_out, steps_out;
  std::unique_ptr<sim::StepCsvWriter> steps;
  std::string ckpt_dir;
  if (!config_.out.empty()) {
    fs::create_directories(config_.out);
    report.decisions_path = join(config_.out, "decisions_" + tag + ".jsonl");
    decisions_out = open_out(report.decisions_path);
    if (config_.write_steps) {
      report.steps_path = join(config_.out, "steps_" + tag + ".csv");
      steps_out = open_out(report.steps_path);
      steps = std::make_unique<sim::StepCsvWriter>(steps_out);
    }
    ckpt_dir = join(config_.out, "checkpoints");
  }

  struct Pending {
    std::int64_t global_time = 0;
    double time = 0.0;
    int chosen = 0;
    std::vector<int> counts;
    double queue_before = 0.0;
    std::vector<double> features;
    nn::SampledResponse action;
    std::vector<double> ref_logprobs;
    double old_value = 0.0;
  };
  std::optional<Pending> pending;
  std::deque<lang::HistoryEntry> history;
  std::int64_t decision_index = 0;

  auto finalize = [&](double queue_after) {
    Pending& p = *pending;
    DecisionRecord rec;
    rec.time = p.time;
    rec.chosen_phase = p.chosen;
    if (trainer_) {
      const reward::RewardBundle b =
          reward::decision_reward(config_.reward, p.queue_before, queue_after, p.counts, p.chosen);
      rec.counts = p.counts;
      rec.p_chosen = b.p_chosen;
      rec.env = b.env;
      rec.total = b.total;
      rec.gate_open = b.gate_open;
      if (learn) {
        ppo::Experience e;
        e.time = p.global_time;
        e.features = std::move(p.features);
        e.tokens = std::move(p.action.tokens);
        e.rewards = reward::assemble_token_rewards(b.total, config_.reward.kl_weight,
                                                   p.action.logprobs, p.ref_logprobs);
        e.old_logprobs = std::move(p.action.logprobs);
        e.old_value = p.old_value;
        buffer_.push(std::move(e));
      }
    } else {
      rec.env = reward::env_reward(p.queue_before, queue_after, config_.reward.env_mode);
      rec.total = reward::total_reward(rec.env, config_.reward.hurdle, 0.0, 0.0);
      rec.gate_open = rec.env > config_.reward.hurdle;
    }
    if (decisions_out.is_open()) decisions_out << to_json(rec).dump() << '\n';
    report.decisions.push_back(std::move(rec));
    pending.reset();
  };

  for (int t = 0; t < horizon; ++t) {
    if (t % every == 0) {
      const sim::SimState& st = sim.state();
      const std::vector<sim::LaneObservation> obs = sim.observe();
      const int current = st.pending_phase.value_or(st.active_phase);
      Pending p;
      p.global_time = base + t;
      p.time = st.time;
      p.queue_before = sim.queue_length();
      if (trainer_) {
        const std::vector<lang::HistoryEntry> hist(history.begin(), history.end());
        const lang::PromptContext ctx = lang::verbalize(topology_, obs, current, hist);
        const nn::PolicyParams& policy = trainer_->policy();
        const int extra = tc.separate_action_sample ? 1 : 0;
        const std::uint64_t decision_seed = derive_seed(seeds.responses, static_cast<std::uint64_t>(decision_index));
        std::vector<int> extracted;
        for (int i = 0; i < tc.group_size + extra; ++i) {
          Rng rng = derive_rng(decision_seed, static_cast<std::uint64_t>(i));
          nn::SampledResponse r = nn::sample_response(policy, ctx.features,
                                                      config_.policy.sampling_temperature,
                                                      config_.policy.max_response, vocab_.eos(), rng);
          const int phase = lang::extract_phase(r.tokens, vocab_, topology_, current);
          if (i == 0) {
            p.chosen = phase;
            p.action = std::move(r);
          }
          if (i >= extra) extracted.push_back(phase);
        }
        p.counts = lang::phase_histogram(extracted, topology_.num_phases());
        p.features = ctx.features;
        p.old_value = nn::value(trainer_->value(), ctx.features);
        p.ref_logprobs = nn::logprobs(trainer_->reference(), ctx.features, p.action.tokens);
      } else {
        p.chosen = baseline->decide({st.time, current, obs});
      }
      history.push_back({obs, p.chosen});
      while (history.size() > lang::kMaxHistory) history.pop_front();
      sim.set_phase(p.chosen);
      pending = std::move(p);
      ++decision_index;
    }

    sim.advance(1.0);
    if (steps) steps->write(sim.state(), topology_);

    const int now = t + 1;
    if (pending && (now % every == 0 || now == horizon)) finalize(sim.queue_length());

    if (learn) {
      const std::int64_t g = base + now;
      global_step_ = g;
      if (g % tc.update_interval == 0) {
        buffer_.evict(g);
        if (!buffer_.empty()) {
          const ppo::UpdateStats stats = trainer_->update(buffer_, update_rng_);
          report.updates.push_back(stats);
          if (!config_.out.empty()) {
            if (!training_log_) {
              const std::string path = join(config_.out, "training_log.csv");
              const bool append = fs::exists(path) && trainer_->update_count() > 1;
              training_log_file_ = std::make_unique<std::ofstream>(
                  open_out(path, append ? std::ios::app : std::ios::trunc));
              training_log_ = std::make_unique<ppo::TrainingLogWriter>(*training_log_file_, !append);
            }
            training_log_->write(stats);
            training_log_file_->flush();
          }
        }
      }
      if (g % tc.checkpoint_interval == 0) {
        std::ostringstream name;
        name << "step_" << std::setw(8) << std::setfill('0') << g << ".ckpt";
        if (!ckpt_dir.empty()) {
          fs::create_directories(ckpt_dir);
          const std::string path = join(ckpt_dir, name.str());
          save_checkpoint(path);
          report.checkpoints.push_back(path);
        } else {
          report.checkpoints.push_back(name.str());
        }
      }
    }
  }

  report.metrics = sim.metrics();
  std::vector<double> env;
  for (const DecisionRecord& r : report.decisions) env.push_back(r.env);
  report.histogram = reward_histogram(env, config_.reward.hurdle);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of no values");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

std::string fmt_optional(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream s;
  s.precision(17);
  s << *v;
  return s.str();
}

void write_episode_row(std::ostream& out, const EpisodeReport& r, std::optional<double> heldout) {
  out << r.episode << ',' << fmt_optional(r.metrics.travel_time) << ','
      << fmt_optional(r.metrics.queue_length) << ',' << fmt_optional(r.metrics.delay_seconds) << ','
      << fmt_optional(r.metrics.delay_ratio) << ',' << r.metrics.throughput << ','
      << r.metrics.injected << ',' << r.decisions.size() << ','
      << fmt_optional(r.histogram.fraction_above) << ',' << fmt_optional(heldout) << '\n';
}

}  // namespace

TrainReport train(const ExperimentConfig& config, const std::string& resume_from) {
  Session session(config);
  TrainReport report;
  report.config_hash = session.hash();
  const int horizon = config.trainer.episode_length;
  int start = 0;
  if (!resume_from.empty()) {
    const ppo::Checkpoint probe = ppo::load_checkpoint(resume_from, session.vocabulary().size());
    if (probe.config_hash != session.hash())
      throw ValidationError("resume: checkpoint config hash " + probe.config_hash +
                            " does not match " + session.hash());
    if (probe.global_step % horizon != 0)
      throw ValidationError("resume: checkpoint at step " + std::to_string(probe.global_step) +
                            " is not on an episode boundary");
    session.load_checkpoint(resume_from);
    start = static_cast<int>(session.global_step() / horizon);
  }

  std::ofstream episodes_out;
  std::string ckpt_dir;
  if (!config.out.empty()) {
    fs::create_directories(config.out);
    json resolved = to_json(config);
    resolved["config_hash"] = report.config_hash;
    open_out(join(config.out, "config.json")) << resolved.dump(2) << '\n';
    const std::string path = join(config.out, "episodes.csv");
    const bool append = start > 0 && fs::exists(path);
    episodes_out = open_out(path, append ? std::ios::app : std::ios::trunc);
    if (!append)
      episodes_out << "episode,travel_time,queue_length,delay_seconds,delay_ratio,throughput,"
                      "injected,decisions,fraction_above_hurdle,heldout_queue\n";
    ckpt_dir = join(config.out, "checkpoints");
  }

  const bool learn = config.learn && session.has_policy();
  double best_queue = INFINITY;
  for (int e = start; e < config.episodes; ++e) {
    EpisodeReport ep =
        session.run_episode(e, learn, EpisodeSeeds::training(config.seed, e), "ep" + std::to_string(e));
    report.interval_checkpoints += static_cast<int>(ep.checkpoints.size());
    std::optional<double> heldout;
    if (learn && config.heldout_eval) {
      const EpisodeReport h = session.run_episode(e, false, EpisodeSeeds::heldout(config.seed),
                                                  "heldout_ep" + std::to_string(e));
      heldout = h.metrics.queue_length;
      report.heldout_queue.push_back(*heldout);
      if (*heldout < best_queue) {
        best_queue = *heldout;
        report.best_episode = e;
        if (!ckpt_dir.empty()) {
          fs::create_directories(ckpt_dir);
          report.best_checkpoint = join(ckpt_dir, "best.ckpt");
          session.save_checkpoint(report.best_checkpoint);
        }
      }
    }
    if (episodes_out.is_open()) {
      write_episode_row(episodes_out, ep, heldout);
      episodes_out.flush();
    }
    report.episodes.push_back(std::move(ep));
  }
  if (session.has_policy() && !ckpt_dir.empty()) {
    fs::create_directories(ckpt_dir);
    report.final_checkpoint = join(ckpt_dir, "final.ckpt");
    session.save_checkpoint(report.final_checkpoint);
  }
  return report;
}

EpisodeReport evaluate(const ExperimentConfig& config, const std::string& checkpoint) {
  Session session(config);
  if (!checkpoint.empty()) session.load_checkpoint(checkpoint);
  return session.run_episode(0, false, EpisodeSeeds::heldout(config.seed), "eval");
}

std::vector<CompareRow> compare(const std::vector<std::pair<std::string, ExperimentConfig>>& entries,
                                std::span<const std::uint64_t> seeds) {
  if (entries.size() < 2) throw ValidationError("compare: need at least two configurations");
  if (seeds.empty()) throw ValidationError("compare: need at least one seed");
  auto environment = [](const ExperimentConfig& c) {
    const json doc = to_json(c);
    return json{{"topology", doc["topology"]},
                {"demand", doc["demand"]},
                {"episode_length", c.trainer.episode_length},
                {"episodes", c.episodes}};
  };
  const json env0 = environment(entries.front().second);
  for (const auto& [name, cfg] : entries)
    if (environment(cfg) != env0)
      throw ValidationError("compare: '" + name +
                            "' differs from the first configuration in topology, demand, "
                            "episode length or episode count");

  std::vector<CompareRow> rows;
  for (const auto& [name, base] : entries) {
    CompareRow row;
    row.name = name;
    std::vector<double> travel, queue, delay_s, delay_r, throughput;
    for (std::uint64_t seed : seeds) {
      ExperimentConfig cfg = base;
      cfg.seed = seed;
      if (!cfg.out.empty()) cfg.out = join(base.out, name + "_seed" + std::to_string(seed));
      sim::Metrics m;
      if (cfg.controller == control::Kind::Policy && cfg.learn) {
        m = train(cfg).episodes.back().metrics;
      } else {
        // Nothing carries over between episodes, so only the last one is run.
        Session s(cfg);
        const int last = cfg.episodes - 1;
        m = s.run_episode(last, false, EpisodeSeeds::training(seed, last), "ep" + std::to_string(last))
                .metrics;
      }
      if (m.travel_time) travel.push_back(*m.travel_time);
      if (m.delay_seconds) delay_s.push_back(*m.delay_seconds);
      if (m.delay_ratio) delay_r.push_back(*m.delay_ratio);
      queue.push_back(m.queue_length);
      throughput.push_back(static_cast<double>(m.throughput));
    }
    if (!travel.empty()) row.travel_time = median(travel);
    if (!delay_s.empty()) row.delay_seconds = median(delay_s);
    if (!delay_r.empty()) row.delay_ratio = median(delay_r);
    row.queue_length = median(queue);
    row.throughput = median(throughput);
    row.seed_queues = queue;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_compare_csv(std::ostream& out, std::span<const CompareRow> rows) {
  out << "config,travel_time,queue_length,delay_seconds,delay_ratio,throughput,seeds\n";
  for (const CompareRow& r : rows)
    out << r.name << ',' << fmt_optional(r.travel_time) << ',' << fmt_optional(r.queue_length) << ','
        << fmt_optional(r.delay_seconds) << ',' << fmt_optional(r.delay_ratio) << ','
        << fmt_optional(r.throughput) << ',' << r.seed_queues.size() << '\n';
}

}  // namespace tsc::experiment
