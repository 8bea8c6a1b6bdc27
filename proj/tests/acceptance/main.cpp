// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "oracles.hpp"
#include "tsc/common/error.hpp"
#include "tsc/experiment/runner.hpp"
#include "tsc/lang/phase_language.hpp"
#include "tsc/nn/autodiff.hpp"
#include "tsc/ppo/objective.hpp"
#include "tsc/reward/reward.hpp"
#include "tsc/sim/intersection.hpp"

using namespace tsc;
namespace fs = std::filesystem;
namespace ex = tsc::experiment;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "tsc_acceptance" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t params = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const testing::GradCheck g = testing::gradient_check(seed, 1e-5);
    worst = std::max(worst, g.max_rel_error);
    params = std::max(params, g.parameters);
    if (g.checked != g.parameters) return {false, "not every parameter was checked"};
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && params <= 5000 && secs < 10.0,
          "max rel error " + fmt(worst, 3) + ", " + std::to_string(params) + " params, " +
              fmt(secs, 3) + " s"};
}

Outcome gae_oracle() {
  Rng rng(20);
  const double gammas[] = {0.0, 0.5, 0.9, 0.99, 1.0};
  const double lambdas[] = {0.0, 0.5, 0.9, 0.95, 1.0};
  double worst = 0.0;
  bool td_exact = true;
  for (int traj = 0; traj < 1000; ++traj) {
    const int n = 1 + uniform_index(rng, 10);
    std::vector<double> r(n), v(n);
    for (int i = 0; i < n; ++i) {
      r[i] = 4.0 * uniform01(rng) - 2.0;
      v[i] = 4.0 * uniform01(rng) - 2.0;
    }
    for (double g : gammas) {
      for (double l : lambdas) {
        const auto fast = ppo::gae(r, v, g, l);
        const auto slow = testing::gae_double_sum(r, v, g, l);
        for (int i = 0; i < n; ++i) worst = std::max(worst, std::abs(fast[i] - slow[i]));
        if (l == 0.0) {
          for (int i = 0; i < n; ++i) {
            const double next = i + 1 < n ? v[i + 1] : 0.0;
            if (fast[i] != r[i] + g * next - v[i]) td_exact = false;
          }
        }
      }
    }
  }
  return {worst <= 1e-10 && td_exact,
          "max |diff| " + fmt(worst, 3) + ", lambda=0 TD residuals " + (td_exact ? "exact" : "inexact")};
}

Outcome dse_limits() {
  Rng rng(30);
  bool ok = true;
  double worst_flat = 0.0;
  for (int trial = 0; trial < 2000; ++trial) {
    const int np = 2 + uniform_index(rng, 7);
    std::vector<int> counts(np);
    for (int& c : counts) c = uniform_index(rng, 9);
    const int chosen = uniform_index(rng, np);
    worst_flat = std::max(worst_flat, std::abs(reward::softmax_dse_prob(counts, chosen, 1e9) - 1.0 / np));

    const int top = *std::max_element(counts.begin(), counts.end());
    if (std::count(counts.begin(), counts.end(), top) == 1) {
      const double p = reward::softmax_dse_prob(counts, chosen, 1e-6);
      const bool is_max = counts[chosen] == top;
      if (is_max ? !(p >= 1 - 1e-6) : !(p <= 1e-6)) ok = false;
    }
    const std::vector<int> uniform(np, counts[0]);
    for (double tau : {1e-6, 0.3, 1.0, 7.0, 1e9})
      if (reward::softmax_dse_prob(uniform, chosen, tau) != 1.0 / np) ok = false;
  }
  const std::vector<int> six_two{6, 2};
  const bool naive = reward::naive_dse_prob(six_two, 0) == 0.75;
  return {ok && naive && worst_flat <= 1e-6,
          "tau=1e9 max dev " + fmt(worst_flat, 3) + ", sharp/uniform " + (ok ? "ok" : "violated") +
              ", naive 6/8 " + (naive ? "= 0.75" : "wrong")};
}

Outcome gate_exactness() {
  Rng rng(40);
  int closed = 0, open = 0, bad = 0;
  for (int i = 0; i < 10000; ++i) {
    const double p = uniform01(rng);
    const double env = 6.0 * uniform01(rng) - 3.0;
    const double h = i % 10 == 0 ? env : 6.0 * uniform01(rng) - 3.0;
    const double w = 2.0 * uniform01(rng);
    const double contribution = w * reward::gated_entropy_reward(p, env, h);
    const double total = reward::total_reward(env, h, w, reward::gated_entropy_reward(p, env, h));
    if (env <= h) {
      ++closed;
      if (contribution != 0.0 || total != env - h) ++bad;
    } else {
      ++open;
      if (contribution != w * p || total != env - h + w * p) ++bad;
    }
  }
  return {bad == 0, std::to_string(closed) + " closed, " + std::to_string(open) + " open, " +
                        std::to_string(bad) + " violations"};
}

Outcome k3_property() {
  Rng rng(50);
  int negative = 0, zero_mismatch = 0;
  for (int i = 0; i < 10000; ++i) {
    const double lp = -8.0 * uniform01(rng);
    const double lr = i % 100 == 0 ? lp : -8.0 * uniform01(rng);
    const double k = reward::k3_kl(lp, lr);
    if (k < 0.0) ++negative;
    const bool is_one = lp == lr;
    if (is_one && k != 0.0) ++zero_mismatch;
    if (!is_one && std::abs(lr - lp) > 2e-6 && k <= 1e-12) ++zero_mismatch;
  }
  const double s2 = reward::k3_kl(0.0, std::log(2.0));
  const double sh = reward::k3_kl(0.0, std::log(0.5));
  const double e2 = std::abs(s2 - (2.0 - std::log(2.0) - 1.0));
  const double eh = std::abs(sh - (0.5 - std::log(0.5) - 1.0));
  return {negative == 0 && zero_mismatch == 0 && e2 <= 1e-12 && eh <= 1e-12,
          std::to_string(negative) + " negative, " + std::to_string(zero_mismatch) +
              " zero mismatches, spot errors " + fmt(e2, 3) + " / " + fmt(eh, 3)};
}

Outcome clip_flatness() {
  Rng rng(60);
  const int tokens = 8, vocab = 6;
  nn::Matrix logits(tokens, vocab);
  for (int i = 0; i < logits.size(); ++i) logits.data()[i] = 2.0 * uniform01(rng) - 1.0;
  std::vector<int> chosen(tokens);
  for (int& c : chosen) c = uniform_index(rng, vocab);

  nn::Matrix lp;
  {
    nn::Tape t;
    lp = nn::pick(nn::log_softmax_rows(t.constant(logits)), chosen).value();
  }
  const double eps_low = 0.2, eps_high = 0.5;
  // ratio, advantage; the first four sit on the clipped branch.
  const double ratio[] = {1.9, 1.6, 0.7, 0.3, 1.2, 0.9, 1.6, 0.7};
  const double adv[] = {1.0, 2.0, -1.0, -0.5, 1.0, -1.0, -1.0, 1.0};
  const bool clipped[] = {true, true, true, true, false, false, false, false};
  nn::Matrix old_lp(tokens, 1), a(tokens, 1);
  for (int i = 0; i < tokens; ++i) {
    old_lp(i, 0) = lp(i, 0) - std::log(ratio[i]);
    a(i, 0) = adv[i];
  }
  nn::Matrix grad = nn::Matrix::Zero(tokens, vocab);
  nn::Tape tape;
  nn::Var z = tape.parameter(logits, &grad);
  nn::Var ratio_var = nn::exp(nn::sub(nn::pick(nn::log_softmax_rows(z), chosen), tape.constant(old_lp)));
  tape.backward(nn::scale(nn::mean(ppo::surrogate_graph(ratio_var, a, eps_low, eps_high)), -1.0));
  int flat = 0, live = 0;
  bool ok = true;
  for (int i = 0; i < tokens; ++i) {
    const double m = grad.row(i).cwiseAbs().maxCoeff();
    if (clipped[i]) {
      ok = ok && m == 0.0;
      flat += m == 0.0;
    } else {
      ok = ok && m > 0.0;
      live += m > 0.0;
    }
  }
  return {ok, std::to_string(flat) + "/4 clipped tokens exactly flat, " + std::to_string(live) +
                  "/4 unclipped tokens with gradient"};
}

Outcome extraction_corpus() {
  const auto cases = testing::load_extraction_corpus(std::string(TSC_FIXTURE_DIR) + "/extraction_corpus.tsv");
  const sim::Topology t = sim::build_topology(sim::Preset::Toy8);
  auto phase_of = [&](const std::string& m) {
    for (const auto& p : t.phases)
      if (p.mnemonic == m) return p.index;
    return -1;
  };
  int agree = 0;
  bool has_canonical = false;
  for (const auto& c : cases) {
    if (c.text.find("<signal>ETEL</signal>") != std::string::npos) has_canonical = true;
    if (lang::extract_phase(c.text, t, phase_of("NTST")) == phase_of(c.expected)) ++agree;
  }
  const int n = static_cast<int>(cases.size());
  return {n >= 20 && agree == n && has_canonical,
          std::to_string(agree) + "/" + std::to_string(n) + " cases agree"};
}

Outcome simulator_conservation() {
  const sim::Topology t = sim::build_topology(sim::Preset::Toy8);
  auto run = [&](std::string& csv) {
    sim::Intersection x(t, sim::default_demand(t), 17);
    std::ostringstream out;
    sim::StepCsvWriter w(out);
    long violations = 0;
    for (int s = 0; s < 3600; ++s) {
      if (s % 10 == 0) x.set_phase((s / 10) % t.num_phases());
      x.advance(1.0);
      const auto& st = x.state();
      if (st.injected_count != st.in_network() + static_cast<std::int64_t>(st.completed.size()))
        ++violations;
      w.write(st, t);
    }
    csv = out.str();
    return violations;
  };
  std::string a, b;
  const long va = run(a);
  const long vb = run(b);

  ex::ExperimentConfig cfg = ex::parse_config({{"seed", 1}, {"learn", false}, {"write_steps", false}});
  ex::Session s(cfg);
  const std::size_t decisions = s.run_episode(0, false, ex::EpisodeSeeds::training(1, 0), "ep0").decisions.size();
  return {va == 0 && vb == 0 && a == b && !a.empty() && decisions == 360,
          std::to_string(va + vb) + " conservation violations, CSVs " +
              (a == b ? "identical" : "differ") + ", " + std::to_string(decisions) + " decisions"};
}

ex::ExperimentConfig baseline_config(control::Kind kind) {
  ex::ExperimentConfig c = ex::parse_config({{"seed", 1}, {"write_steps", false}});
  c.controller = kind;
  c.t_fixed = 10.0;
  return c;
}

Outcome baseline_ordering() {
  const auto t0 = Clock::now();
  const auto rows = ex::compare({{"fixed", baseline_config(control::Kind::FixedTime)},
                                 {"maxpressure", baseline_config(control::Kind::MaxPressure)}},
                                kSeeds);
  const double secs = seconds_since(t0);
  const double f = rows[0].queue_length, m = rows[1].queue_length;
  return {m <= 0.7 * f && secs < 60.0,
          "MaxPressure " + fmt(m) + " vs FixedTime " + fmt(f) + " (ratio " + fmt(m / f, 3) + "), " +
              fmt(secs, 3) + " s"};
}

ex::ExperimentConfig shipped(const std::string& name) {
  return ex::load_config(std::string(TSC_CONFIG_DIR) + "/" + name + ".json");
}

Outcome training_trend() {
  const auto t0 = Clock::now();
  const auto rows = ex::compare({{"untrained", shipped("untrained")},
                                 {"env_only", shipped("env_only")},
                                 {"hurdle", shipped("hurdle")},
                                 {"hurdle_dse", shipped("hurdle_dse")}},
                                kSeeds);
  const double secs = seconds_since(t0);
  const double u = rows[0].queue_length, e = rows[1].queue_length, h = rows[2].queue_length,
               d = rows[3].queue_length;
  const bool order = u >= e && e >= h;
  const bool dse = d <= 1.05 * h;
  const double reduction = 1.0 - h / u;
  const bool enough = reduction >= 0.25;
  std::string detail = "untrained " + fmt(u) + ", env-only " + fmt(e) + ", hurdle " + fmt(h) +
                       ", hurdle+dse " + fmt(d) + "; ordering " + (order ? "ok" : "violated") +
                       ", dse " + (dse ? "ok" : "violated") + ", hurdle reduction " +
                       fmt(100.0 * reduction, 3) + "% (need 25%), " + fmt(secs, 4) + " s";
  return {order && dse && enough && secs <= 1800.0, detail};
}

Outcome hurdle_distribution() {
  const ex::ExperimentConfig base = shipped("hurdle");
  const double h = base.reward.hurdle;
  std::vector<double> before, after;
  for (std::uint64_t seed : kSeeds) {
    ex::ExperimentConfig cfg = base;
    cfg.seed = seed;
    cfg.out = scratch("hurdle_seed" + std::to_string(seed)).string();
    ex::Session s(cfg);
    const auto pre = s.run_episode(0, false, ex::EpisodeSeeds::heldout(seed), "before");
    for (int e = 0; e < cfg.episodes; ++e)
      s.run_episode(e, true, ex::EpisodeSeeds::training(seed, e), "ep" + std::to_string(e));
    const auto post = s.run_episode(cfg.episodes, false, ex::EpisodeSeeds::heldout(seed), "after");
    before.push_back(ex::reward_histogram(pre.decisions_path, h).fraction_above);
    after.push_back(ex::reward_histogram(post.decisions_path, h).fraction_above);
  }
  const double b = ex::median(before), a = ex::median(after);
  return {a >= b, "fraction above hurdle " + fmt(b, 3) + " -> " + fmt(a, 3) + " (median of 5 seeds)"};
}

Outcome checkpoint_round_trip() {
  ex::ExperimentConfig cfg = shipped("hurdle");
  cfg.seed = 11;
  cfg.out = scratch("ckpt_original").string();
  ex::Session original(cfg);
  const std::size_t first_updates =
      original.run_episode(0, true, ex::EpisodeSeeds::training(cfg.seed, 0), "ep0").updates.size();
  const fs::path ckpt = fs::path(cfg.out) / "checkpoints" / "step_00003600.ckpt";

  ex::ExperimentConfig cfg2 = cfg;
  cfg2.out = scratch("ckpt_restored").string();
  ex::Session restored(cfg2);
  restored.load_checkpoint(ckpt.string());

  // Greedy responses on contexts drawn from a simulated episode.
  const sim::Topology t = original.topology();
  sim::Intersection x(t, sim::default_demand(t), 3);
  int contexts = 0, greedy_same = 0;
  for (int s = 0; s < 3600; ++s) {
    if (s % 60 == 0) {
      const auto ctx = lang::verbalize(t, x.observe(), x.state().active_phase);
      ++contexts;
      greedy_same += original.greedy_response(ctx.features) == restored.greedy_response(ctx.features);
      x.set_phase((s / 60) % t.num_phases());
    }
    x.advance(1.0);
  }

  const auto a = original.run_episode(1, true, ex::EpisodeSeeds::training(cfg.seed, 1), "ep1");
  const auto b = restored.run_episode(1, true, ex::EpisodeSeeds::training(cfg.seed, 1), "ep1");
  bool same_updates = a.updates.size() == b.updates.size() && !a.updates.empty();
  for (std::size_t i = 0; same_updates && i < a.updates.size(); ++i) {
    const auto& p = a.updates[i];
    const auto& q = b.updates[i];
    same_updates = p.step == q.step && p.mean_ratio == q.mean_ratio && p.policy_loss == q.policy_loss &&
                   p.value_loss == q.value_loss && p.grad_norm_policy == q.grad_norm_policy;
  }
  // Log continuation: the restored run's rows equal the tail of the original log.
  auto lines = [](const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
  };
  const auto la = lines(fs::path(cfg.out) / "training_log.csv");
  const auto lb = lines(fs::path(cfg2.out) / "training_log.csv");
  bool log_same = lb.size() >= 2 && la.size() == lb.size() + first_updates &&
                  la.front() == lb.front();
  if (log_same) log_same = std::equal(lb.begin() + 1, lb.end(), la.end() - static_cast<long>(lb.size() - 1));
  return {greedy_same == contexts && same_updates && log_same,
          std::to_string(greedy_same) + "/" + std::to_string(contexts) + " greedy rollouts identical, updates " +
              (same_updates ? "identical" : "differ") + ", training log " +
              (log_same ? "continues exactly" : "diverges")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"GAE oracle", gae_oracle},
      {"softmax DSE limits and symmetry", dse_limits},
      {"reward gate exactness", gate_exactness},
      {"K3 property", k3_property},
      {"clip flatness", clip_flatness},
      {"phase extraction corpus", extraction_corpus},
      {"simulator conservation and determinism", simulator_conservation},
      {"baseline ordering", baseline_ordering},
      {"training directional trend", training_trend},
      {"hurdle distribution diagnostic", hurdle_distribution},
      {"checkpoint round trip", checkpoint_round_trip},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
