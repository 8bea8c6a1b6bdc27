#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "tsc/common/error.hpp"
#include "tsc/control/controllers.hpp"

using namespace tsc;
using namespace tsc::control;

namespace {

std::vector<sim::LaneObservation> queued(const std::vector<int>& counts) {
  std::vector<sim::LaneObservation> obs(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) obs[i].early_queued = counts[i];
  return obs;
}

long long pressure_of(const sim::PhaseSpec& p, const std::vector<sim::LaneObservation>& obs) {
  long long s = 0;
  for (int lane : p.allowed_lanes) s += obs[static_cast<std::size_t>(lane)].early_queued;
  return s;
}

sim::Topology two_phase() {
  sim::Topology t;
  t.approaches = {"Northern", "Eastern"};
  t.lanes = {sim::Lane{0, sim::Movement::Through, 300, 10, 2, "Northern through"},
             sim::Lane{1, sim::Movement::Through, 300, 10, 2, "Eastern through"}};
  t.phases = {{0, "NT", "Northern through lane", {0}}, {1, "ET", "Eastern through lane", {1}}};
  return sim::build_topology(t);
}

}  // namespace

TEST(FixedTime, Examples) {
  EXPECT_EQ(fixed_time(0, 10, 4), 0);
  EXPECT_EQ(fixed_time(25, 10, 4), 2);
  EXPECT_EQ(fixed_time(9.999, 10, 4), 0);
  EXPECT_EQ(fixed_time(10, 10, 4), 1);
  EXPECT_EQ(fixed_time(40, 10, 4), 0);
  EXPECT_EQ(fixed_time(75, 10, 8), 7);
  EXPECT_THROW(fixed_time(0, 0, 4), ValidationError);
  EXPECT_THROW(fixed_time(0, 10, 0), ValidationError);
}

TEST(FixedTime, VisitsEveryPhaseOncePerCycle) {
  for (int n : {1, 2, 4, 8}) {
    for (double tf : {5.0, 10.0, 30.0}) {
      for (int cycle = 0; cycle < 3; ++cycle) {
        std::vector<int> seen(static_cast<std::size_t>(n), 0);
        const double start = cycle * n * tf;
        for (double t = start; t < start + n * tf; t += 1.0) ++seen[static_cast<std::size_t>(fixed_time(t, tf, n))];
        for (int c : seen) EXPECT_EQ(c, static_cast<int>(tf));
      }
    }
  }
}

TEST(MaxPressure, PicksLargestQueuedSum) {
  const sim::Topology t = sim::build_topology(sim::Preset::Toy8);
  EXPECT_EQ(max_pressure(queued({0, 0, 0, 0, 0, 0, 0, 0}), t), 0);
  // NTST holds {2, 2}, ETWT holds {5, 3}.
  EXPECT_EQ(max_pressure(queued({2, 0, 2, 0, 5, 0, 3, 0}), t), 4);
  // ETWT, ELWL, ETEL and WTWL all total 3: lowest index wins.
  EXPECT_EQ(max_pressure(queued({0, 0, 0, 0, 3, 0, 0, 3}), t), 4);
  // Moving vehicles do not count.
  auto obs = queued({0, 0, 0, 0, 0, 0, 0, 1});
  obs[0].seg1 = 50;
  obs[2].seg3 = 50;
  EXPECT_EQ(max_pressure(obs, t), 5);
  EXPECT_THROW(max_pressure(queued({1, 2}), t), ValidationError);
}

TEST(MaxPressure, NeverChoosesADominatedPhase) {
  Rng rng(11);
  for (auto preset : {sim::Preset::Toy8, sim::Preset::Toy4}) {
    const sim::Topology t = sim::build_topology(preset);
    for (int trial = 0; trial < 2000; ++trial) {
      std::vector<int> counts(static_cast<std::size_t>(t.num_lanes()));
      for (int& c : counts) c = uniform_index(rng, 6);
      const auto obs = queued(counts);
      const int pick = max_pressure(obs, t);
      const long long chosen = pressure_of(t.phases[static_cast<std::size_t>(pick)], obs);
      for (const auto& p : t.phases) {
        EXPECT_GE(chosen, pressure_of(p, obs));
        if (p.index < pick) EXPECT_GT(chosen, pressure_of(p, obs));
      }
    }
  }
}

TEST(MaxPressure, HoldsWhileOneApproachDominates) {
  const sim::Topology t = two_phase();
  MaxPressureController c(t);
  const auto obs = queued({4, 1});
  for (int i = 0; i < 5; ++i) EXPECT_EQ(c.decide({10.0 * i, 0, obs}), 0);
  EXPECT_EQ(c.decide({60.0, 0, queued({1, 4})}), 1);
}

TEST(RandomPolicy, SinglePhaseAndReproducibility) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(random_policy(rng, 1), 0);
  EXPECT_THROW(random_policy(rng, 0), ValidationError);
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(random_policy(a, 8), random_policy(b, 8));
  const sim::Topology t = sim::build_topology(sim::Preset::Toy8);
  RandomController ca(t, 9), cb(t, 9);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(ca.decide({}), cb.decide({}));
}

TEST(RandomPolicy, FrequenciesAreUniform) {
  Rng rng(123);
  const int n = 8;
  const int draws = 80000;
  std::vector<int> counts(n, 0);
  for (int i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(random_policy(rng, n))];
  const double p = 1.0 / n;
  const double se = std::sqrt(p * (1 - p) / draws);
  for (int c : counts) EXPECT_NEAR(static_cast<double>(c) / draws, p, 3 * se + 1e-12);
}

TEST(Controllers, KindsAndDispatch) {
  const sim::Topology t = sim::build_topology(sim::Preset::Toy8);
  FixedTimeController f(t, 10);
  MaxPressureController m(t);
  RandomController r(t, 1);
  EXPECT_EQ(f.kind(), Kind::FixedTime);
  EXPECT_EQ(m.kind(), Kind::MaxPressure);
  EXPECT_EQ(r.kind(), Kind::Random);
  EXPECT_EQ(f.decide({25.0, 0, {}}), 2);
  const auto obs = queued({0, 0, 0, 0, 0, 9, 0, 0});
  EXPECT_EQ(m.decide({0.0, 0, obs}), 5);
  for (Kind k : {Kind::Policy, Kind::FixedTime, Kind::MaxPressure, Kind::Random})
    EXPECT_EQ(kind_from_string(to_string(k)), k);
  EXPECT_EQ(to_string(Kind::MaxPressure), "maxpressure");
  EXPECT_THROW(kind_from_string("greedy"), ValidationError);
  EXPECT_THROW(FixedTimeController(t, 0.0), ValidationError);
}
