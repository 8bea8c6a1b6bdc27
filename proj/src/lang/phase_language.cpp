#include "tsc/lang/phase_language.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <sstream>

#include "tsc/common/error.hpp"

namespace tsc::lang {

namespace {

constexpr std::array<std::string_view, 16> kFillerWords = {
    "step",     "analyze", "queue",   "early",    "approaching", "segment",
    "lane",     "phase",   "highest", "vehicles", "traffic",     "optimal",
    "choose",   "because", "current", "therefore",
};

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

long long rfind_or_minus_one(const std::string& haystack, const std::string& needle) {
  if (needle.empty()) return -1;
  const auto pos = haystack.rfind(needle);
  return pos == std::string::npos ? -1 : static_cast<long long>(pos);
}

// Contents of every <signal>...</signal> span, left to right, matching a
// lazy regex whose wildcard does not cross newlines.
std::vector<std::string_view> tagged_spans(std::string_view text) {
  std::vector<std::string_view> spans;
  std::size_t from = 0;
  while (true) {
    const auto open = text.find(kSignalOpen, from);
    if (open == std::string_view::npos) break;
    const auto content = open + kSignalOpen.size();
    const auto close = text.find(kSignalClose, content);
    if (close == std::string_view::npos) break;
    const auto newline = text.find('\n', content);
    if (newline != std::string_view::npos && newline < close) {
      from = open + 1;
      continue;
    }
    spans.push_back(text.substr(content, close - content));
    from = close + kSignalClose.size();
  }
  return spans;
}

}  // namespace

Vocabulary::Vocabulary(const sim::Topology& topology, int filler_count) {
  if (filler_count < 0) throw ValidationError("vocabulary: filler_count must be >= 0");
  auto add = [this](std::string text, TokenKind kind, int phase) {
    if (index_.count(text)) throw ValidationError("vocabulary: duplicate token '" + text + "'");
    index_.emplace(text, static_cast<int>(tokens_.size()));
    tokens_.push_back({std::move(text), kind, phase});
  };
  for (const sim::PhaseSpec& p : topology.phases) add(p.mnemonic, TokenKind::Mnemonic, p.index);
  signal_open_ = size();
  add(std::string(kSignalOpen), TokenKind::SignalOpen, -1);
  signal_close_ = size();
  add(std::string(kSignalClose), TokenKind::SignalClose, -1);
  eos_ = size();
  add("<eos>", TokenKind::Eos, -1);
  numeral0_ = size();
  for (int d = 0; d < 10; ++d) add(std::to_string(d), TokenKind::Numeral, -1);
  filler0_ = size();
  for (int i = 0; i < filler_count; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    std::string word = ui < kFillerWords.size() ? std::string(kFillerWords[ui])
                                                : "think" + std::to_string(i);
    add(std::move(word), TokenKind::Filler, -1);
  }

  // Filler text must never be mistaken for a phase by the extraction fallback.
  for (int id = filler0_; id < size(); ++id) {
    const std::string w = lower(tokens_[static_cast<std::size_t>(id)].text);
    for (const sim::PhaseSpec& p : topology.phases) {
      if (w.find(lower(p.mnemonic)) != std::string::npos ||
          (!p.description.empty() && w.find(lower(p.description)) != std::string::npos))
        throw ValidationError("vocabulary: filler token '" + w + "' contains phase '" +
                              p.mnemonic + "'");
    }
  }
}

const Token& Vocabulary::token(int id) const {
  if (id < 0 || id >= size())
    throw ValidationError("vocabulary: token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<int> Vocabulary::find(std::string_view text) const {
  const auto it = index_.find(std::string(text));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  int prev = -1;
  for (int id : ids) {
    const Token& t = token(id);
    if (t.kind == TokenKind::Eos) continue;
    const bool glue = prev < 0 || prev == signal_open_ || id == signal_close_;
    if (!glue) out += ' ';
    out += t.text;
    prev = id;
  }
  return out;
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  std::string padded;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text.compare(i, kSignalOpen.size(), kSignalOpen) == 0) {
      padded += std::string(kSignalOpen) + ' ';
      i += kSignalOpen.size() - 1;
    } else if (text.compare(i, kSignalClose.size(), kSignalClose) == 0) {
      padded += ' ' + std::string(kSignalClose);
      i += kSignalClose.size() - 1;
    } else {
      padded += text[i];
    }
  }
  std::istringstream in(padded);
  std::string word;
  while (in >> word) {
    const auto id = find(word);
    if (!id) throw ValidationError("vocabulary: unknown token '" + word + "'");
    ids.push_back(*id);
  }
  return ids;
}

std::size_t feature_length(const sim::Topology& topology) {
  return static_cast<std::size_t>(topology.num_phases()) * 5;
}

PromptContext verbalize(const sim::Topology& topology,
                        std::span<const sim::LaneObservation> observation, int current_phase,
                        std::span<const HistoryEntry> history) {
  if (static_cast<int>(observation.size()) != topology.num_lanes())
    throw ValidationError("verbalize: observation must cover every lane (expected " +
                          std::to_string(topology.num_lanes()) + ", got " +
                          std::to_string(observation.size()) + ")");
  if (current_phase < 0 || current_phase >= topology.num_phases())
    throw ValidationError("verbalize: current phase out of range");

  PromptContext ctx;
  ctx.observation.assign(observation.begin(), observation.end());
  ctx.current_phase = current_phase;
  const std::size_t keep = std::min(history.size(), kMaxHistory);
  ctx.history.assign(history.end() - static_cast<std::ptrdiff_t>(keep), history.end());

  const auto np = static_cast<std::size_t>(topology.num_phases());
  ctx.features.assign(feature_length(topology), 0.0);
  for (std::size_t p = 0; p < np; ++p) {
    for (int lane : topology.phases[p].allowed_lanes) {
      const sim::LaneObservation& o = observation[static_cast<std::size_t>(lane)];
      ctx.features[4 * p + 0] += o.early_queued;
      ctx.features[4 * p + 1] += o.seg1;
      ctx.features[4 * p + 2] += o.seg2;
      ctx.features[4 * p + 3] += o.seg3;
    }
  }
  ctx.features[4 * np + static_cast<std::size_t>(current_phase)] = 1.0;
  return ctx;
}

std::string render_phase_block(const sim::Topology& topology, const sim::PhaseSpec& phase,
                               std::span<const sim::LaneObservation> observation) {
  std::ostringstream out;
  auto row = [&](const char* title, auto field) {
    out << title;
    bool first = true;
    for (int lane : phase.allowed_lanes) {
      out << (first ? " " : ", ") << topology.lanes[static_cast<std::size_t>(lane)].label << ": "
          << field(observation[static_cast<std::size_t>(lane)]);
      first = false;
    }
    out << '\n';
  };
  out << "Phase: " << phase.mnemonic << " (" << phase.description << ")\n";
  row("Early queued:", [](const sim::LaneObservation& o) { return o.early_queued; });
  row("Segment 1:", [](const sim::LaneObservation& o) { return o.seg1; });
  row("Segment 2:", [](const sim::LaneObservation& o) { return o.seg2; });
  row("Segment 3:", [](const sim::LaneObservation& o) { return o.seg3; });
  return out.str();
}

std::string render_prompt(const sim::Topology& topology, const PromptContext& context) {
  std::ostringstream out;
  out << "Intersection with " << topology.num_phases()
      << " signal phases. Pick one phase and give it as " << kSignalOpen << "MNEMONIC"
      << kSignalClose << ".\n";
  for (std::size_t h = 0; h < context.history.size(); ++h) {
    const HistoryEntry& entry = context.history[h];
    out << "\n## Earlier state " << (h + 1) << "\n";
    for (const sim::PhaseSpec& p : topology.phases)
      out << render_phase_block(topology, p, entry.observation);
    out << "Action taken: "
        << topology.phases[static_cast<std::size_t>(entry.action)].mnemonic << '\n';
  }
  out << "\n## Current state (current phase "
      << topology.phases[static_cast<std::size_t>(context.current_phase)].mnemonic << ")\n";
  for (const sim::PhaseSpec& p : topology.phases)
    out << render_phase_block(topology, p, context.observation);
  return out.str();
}

int extract_phase(std::string_view text, const sim::Topology& topology, int default_code) {
  const auto spans = tagged_spans(text);
  for (auto it = spans.rbegin(); it != spans.rend(); ++it) {
    for (const sim::PhaseSpec& p : topology.phases) {
      if (*it == p.mnemonic) return p.index;
    }
  }

  const std::string low = lower(text);
  long long best_pos = -1;
  int best = -1;
  for (const sim::PhaseSpec& p : topology.phases) {
    const long long pos = std::max(rfind_or_minus_one(low, lower(p.mnemonic)),
                                   rfind_or_minus_one(low, lower(p.description)));
    if (pos > best_pos) {
      best_pos = pos;
      best = p.index;
    }
  }
  return best >= 0 ? best : default_code;
}

int extract_phase(std::span<const int> tokens, const Vocabulary& vocab,
                  const sim::Topology& topology, int default_code) {
  return extract_phase(vocab.decode(tokens), topology, default_code);
}

std::vector<int> phase_histogram(std::span<const std::vector<int>> responses,
                                 const Vocabulary& vocab, const sim::Topology& topology,
                                 int default_code) {
  std::vector<int> phases;
  phases.reserve(responses.size());
  for (const auto& r : responses) phases.push_back(extract_phase(r, vocab, topology, default_code));
  return phase_histogram(phases, topology.num_phases());
}

std::vector<int> phase_histogram(std::span<const int> extracted_phases, int num_phases) {
  std::vector<int> counts(static_cast<std::size_t>(num_phases), 0);
  for (int p : extracted_phases) ++counts[static_cast<std::size_t>(p)];
  return counts;
}

}  // namespace tsc::lang
