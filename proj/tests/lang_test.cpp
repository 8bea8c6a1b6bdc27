#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "corpus.hpp"
#include "tsc/common/error.hpp"
#include "tsc/lang/phase_language.hpp"

using namespace tsc;
using namespace tsc::lang;

namespace {

const sim::Topology& toy8() {
  static const sim::Topology t = sim::build_topology(sim::Preset::Toy8);
  return t;
}

int phase_of(const std::string& mnemonic) {
  for (const auto& p : toy8().phases)
    if (p.mnemonic == mnemonic) return p.index;
  return -1;
}

std::vector<sim::LaneObservation> empty_obs() { return std::vector<sim::LaneObservation>(8); }

}  // namespace

TEST(Vocabulary, LayoutIsDenseAndOrdered) {
  const Vocabulary v(toy8(), 16);
  EXPECT_EQ(v.size(), 8 + 3 + 10 + 16);
  for (int p = 0; p < 8; ++p) {
    EXPECT_EQ(v.token(v.mnemonic_token(p)).text, toy8().phases[static_cast<std::size_t>(p)].mnemonic);
    EXPECT_EQ(v.token(p).kind, TokenKind::Mnemonic);
    EXPECT_EQ(v.token(p).phase, p);
  }
  EXPECT_EQ(v.signal_open(), 8);
  EXPECT_EQ(v.signal_close(), 9);
  EXPECT_EQ(v.eos(), 10);
  EXPECT_EQ(v.numeral(0), 11);
  EXPECT_EQ(v.token(v.numeral(7)).text, "7");
  EXPECT_EQ(v.filler_count(), 16);
  std::set<std::string> texts;
  for (int id = 0; id < v.size(); ++id) texts.insert(v.token(id).text);
  EXPECT_EQ(static_cast<int>(texts.size()), v.size());
  EXPECT_THROW(v.token(v.size()), ValidationError);
  EXPECT_THROW(v.token(-1), ValidationError);
}

TEST(Vocabulary, FillerTokensNeverExtractAsAPhase) {
  const Vocabulary v(toy8(), 40);
  for (int id = v.size() - v.filler_count(); id < v.size(); ++id) {
    const std::vector<int> one{id};
    EXPECT_EQ(extract_phase(one, v, toy8(), 3), 3) << v.token(id).text;
  }
}

TEST(Vocabulary, DecodeGluesSignalTagsAndEncodeInverts) {
  const Vocabulary v(toy8());
  const std::vector<int> ids{*v.find("step"), v.signal_open(), phase_of("ETEL"), v.signal_close(),
                             v.eos()};
  EXPECT_EQ(v.decode(ids), "step <signal>ETEL</signal>");
  const std::vector<int> back = v.encode("step <signal>ETEL</signal>");
  EXPECT_EQ(back, std::vector<int>(ids.begin(), ids.end() - 1));
  EXPECT_THROW(v.encode("step bogus"), ValidationError);
}

TEST(Verbalize, EmptyIntersectionHasZeroCountsAndPhaseOneHot) {
  const PromptContext ctx = verbalize(toy8(), empty_obs(), 6);
  ASSERT_EQ(ctx.features.size(), 40u);
  for (std::size_t i = 0; i < 32; ++i) EXPECT_EQ(ctx.features[i], 0.0);
  for (std::size_t p = 0; p < 8; ++p) EXPECT_EQ(ctx.features[32 + p], p == 6 ? 1.0 : 0.0);
}

TEST(Verbalize, EarlyQueueCountsReachBlockAndFeatures) {
  auto obs = empty_obs();
  obs[4].early_queued = 17;  // Eastern through
  obs[6].early_queued = 3;   // Western through
  obs[4].seg2 = 2;
  const PromptContext ctx = verbalize(toy8(), obs, 0);
  const std::size_t etwt = static_cast<std::size_t>(phase_of("ETWT"));
  EXPECT_EQ(ctx.features[4 * etwt + 0], 20.0);
  EXPECT_EQ(ctx.features[4 * etwt + 2], 2.0);
  EXPECT_EQ(ctx.features[4 * static_cast<std::size_t>(phase_of("ETEL"))], 17.0);
  EXPECT_EQ(ctx.features[4 * static_cast<std::size_t>(phase_of("WTWL"))], 3.0);

  const std::string block = render_phase_block(toy8(), toy8().phases[etwt], obs);
  EXPECT_NE(block.find("Phase: ETWT"), std::string::npos);
  EXPECT_NE(block.find("Early queued: Eastern through: 17, Western through: 3"), std::string::npos)
      << block;
  const std::string prompt = render_prompt(toy8(), ctx);
  EXPECT_NE(prompt.find("Eastern through: 17"), std::string::npos);
}

TEST(Verbalize, DeterministicAndBoundsChecked) {
  auto obs = empty_obs();
  obs[1].seg3 = 4;
  std::vector<HistoryEntry> hist{{empty_obs(), 1}, {obs, 2}, {obs, 3}};
  const PromptContext a = verbalize(toy8(), obs, 2, hist);
  const PromptContext b = verbalize(toy8(), obs, 2, hist);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(render_prompt(toy8(), a), render_prompt(toy8(), b));
  ASSERT_EQ(a.history.size(), kMaxHistory);
  EXPECT_EQ(a.history[0].action, 2);
  EXPECT_EQ(a.history[1].action, 3);

  std::vector<sim::LaneObservation> short_obs(7);
  EXPECT_THROW(verbalize(toy8(), short_obs, 0), ValidationError);
  EXPECT_THROW(verbalize(toy8(), obs, 8), ValidationError);
}

TEST(Verbalize, FeatureLengthIsFivePerPhase) {
  EXPECT_EQ(feature_length(toy8()), 40u);
  const auto toy4 = sim::build_topology(sim::Preset::Toy4);
  EXPECT_EQ(feature_length(toy4), 20u);
  const PromptContext ctx = verbalize(toy4, std::vector<sim::LaneObservation>(12), 1);
  EXPECT_EQ(ctx.features.size(), 20u);
}

TEST(Extract, CorpusFixture) {
  const auto cases = tsc::testing::load_extraction_corpus(std::string(TSC_FIXTURE_DIR) +
                                                     "/extraction_corpus.tsv");
  ASSERT_GE(cases.size(), 20u);
  for (const auto& c : cases) {
    const int expected = phase_of(c.expected);
    ASSERT_GE(expected, 0) << "bad fixture mnemonic " << c.expected;
    EXPECT_EQ(extract_phase(c.text, toy8(), phase_of("NTST")), expected) << "input: " << c.text;
  }
}

TEST(Extract, CanonicalTaggedOutput) {
  EXPECT_EQ(extract_phase("reasoning ... <signal>ETEL</signal>", toy8(), 0), phase_of("ETEL"));
  EXPECT_EQ(extract_phase("<signal>XYZ</signal> ... prefer WTWL overall", toy8(), 0),
            phase_of("WTWL"));
  EXPECT_EQ(extract_phase("", toy8(), 5), 5);
}

TEST(Extract, TagSpanDoesNotCrossNewlines) {
  EXPECT_EQ(extract_phase("<signal>ETEL\n</signal> <signal>NLSL</signal>", toy8(), 0),
            phase_of("NLSL"));
  EXPECT_EQ(extract_phase("<signal>\nSTSL</signal>", toy8(), 0), phase_of("STSL"));
}

TEST(Extract, TotalOverRandomTokenSequences) {
  const Vocabulary v(toy8());
  Rng rng(17);
  for (int trial = 0; trial < 5000; ++trial) {
    std::vector<int> ids;
    const int len = uniform_index(rng, 33);
    for (int i = 0; i < len; ++i) ids.push_back(uniform_index(rng, v.size()));
    const int d = uniform_index(rng, 8);
    const int p = extract_phase(ids, v, toy8(), d);
    ASSERT_GE(p, 0);
    ASSERT_LT(p, 8);
  }
}

TEST(Extract, ValidTagAlwaysBeatsMentions) {
  const Vocabulary v(toy8());
  Rng rng(23);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<int> ids;
    const int tagged = uniform_index(rng, 8);
    const int before = uniform_index(rng, 10), after = uniform_index(rng, 10);
    // Mnemonics and fillers only, so no other tag can form.
    auto noise = [&] {
      const int r = uniform_index(rng, 8 + v.filler_count());
      return r < 8 ? r : v.size() - v.filler_count() + (r - 8);
    };
    for (int i = 0; i < before; ++i) ids.push_back(noise());
    ids.insert(ids.end(), {v.signal_open(), tagged, v.signal_close()});
    for (int i = 0; i < after; ++i) ids.push_back(noise());
    ASSERT_EQ(extract_phase(ids, v, toy8(), 0), tagged) << v.decode(ids);
  }
}

TEST(Extract, RenderedPhaseBlocksRecoverTheirPhase) {
  auto obs = empty_obs();
  for (std::size_t l = 0; l < 8; ++l) obs[l].early_queued = static_cast<int>(l);
  for (const auto& p : toy8().phases)
    EXPECT_EQ(extract_phase(render_phase_block(toy8(), p, obs), toy8(), 0), p.index);
  const auto toy4 = sim::build_topology(sim::Preset::Toy4);
  for (const auto& p : toy4.phases)
    EXPECT_EQ(extract_phase(render_phase_block(toy4, p, std::vector<sim::LaneObservation>(12)),
                            toy4, 0),
              p.index);
}

TEST(Histogram, UnanimousSplitAndGarbage) {
  const Vocabulary v(toy8());
  const int etel = phase_of("ETEL");
  const std::vector<int> tagged{v.signal_open(), etel, v.signal_close()};
  std::vector<std::vector<int>> all(8, tagged);
  auto counts = phase_histogram(all, v, toy8(), 0);
  EXPECT_EQ(counts[static_cast<std::size_t>(etel)], 8);
  EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), 0), 8);

  std::vector<std::vector<int>> split(6, std::vector<int>{0});
  split.insert(split.end(), 2, std::vector<int>{1});
  EXPECT_EQ(phase_histogram(split, v, toy8(), 4), (std::vector<int>{6, 2, 0, 0, 0, 0, 0, 0}));

  std::vector<std::vector<int>> garbage(8, std::vector<int>{*v.find("lane"), v.numeral(3)});
  counts = phase_histogram(garbage, v, toy8(), 5);
  EXPECT_EQ(counts[5], 8);
}

TEST(Histogram, SumsToGroupSize) {
  const Vocabulary v(toy8());
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    const int g = 1 + uniform_index(rng, 16);
    std::vector<std::vector<int>> responses(static_cast<std::size_t>(g));
    for (auto& r : responses)
      for (int i = uniform_index(rng, 12); i > 0; --i) r.push_back(uniform_index(rng, v.size()));
    const auto counts = phase_histogram(responses, v, toy8(), uniform_index(rng, 8));
    ASSERT_EQ(std::accumulate(counts.begin(), counts.end(), 0), g);
  }
}
