#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tsc/sim/intersection.hpp"

namespace tsc::lang {

enum class TokenKind { Mnemonic, SignalOpen, SignalClose, Eos, Numeral, Filler };

struct Token {
  std::string text;
  TokenKind kind = TokenKind::Filler;
  int phase = -1;  // set for mnemonic tokens
};

inline constexpr std::string_view kSignalOpen = "<signal>";
inline constexpr std::string_view kSignalClose = "</signal>";

// Token ids are dense in [0, size()). Layout: one token per phase mnemonic,
// then <signal>, </signal>, <eos>, the digits 0-9, then the filler tokens.
class Vocabulary {
 public:
  Vocabulary(const sim::Topology& topology, int filler_count = 16);

  int size() const { return static_cast<int>(tokens_.size()); }
  const Token& token(int id) const;
  int mnemonic_token(int phase) const { return phase; }
  int signal_open() const { return signal_open_; }
  int signal_close() const { return signal_close_; }
  int eos() const { return eos_; }
  int numeral(int digit) const { return numeral0_ + digit; }
  int filler_count() const { return size() - filler0_; }
  std::optional<int> find(std::string_view text) const;

  // Decoded text form. Tokens are space separated except that nothing is
  // inserted after <signal> or before </signal>; <eos> decodes to nothing.
  std::string decode(std::span<const int> ids) const;

  // Inverse of decode for whitespace-separated text made of known tokens.
  std::vector<int> encode(std::string_view text) const;

 private:
  std::vector<Token> tokens_;
  std::unordered_map<std::string, int> index_;
  int signal_open_ = 0;
  int signal_close_ = 0;
  int eos_ = 0;
  int numeral0_ = 0;
  int filler0_ = 0;
};

struct HistoryEntry {
  std::vector<sim::LaneObservation> observation;
  int action = 0;
};

// Verbalized decision state. The feature vector holds, per phase, the sums of
// early_queued, seg1, seg2 and seg3 over its allowed lanes (raw counts),
// followed by a one-hot of the current phase: length 5 * N_P.
struct PromptContext {
  std::vector<sim::LaneObservation> observation;
  int current_phase = 0;
  std::vector<HistoryEntry> history;  // at most two, oldest first
  std::vector<double> features;
};

inline constexpr std::size_t kMaxHistory = 2;

std::size_t feature_length(const sim::Topology& topology);

PromptContext verbalize(const sim::Topology& topology,
                        std::span<const sim::LaneObservation> observation, int current_phase,
                        std::span<const HistoryEntry> history = {});

// Human-readable prompt: task header, one block per phase for the current
// state, then the recent history.
std::string render_prompt(const sim::Topology& topology, const PromptContext& context);

// Per-phase block for one observation.
std::string render_phase_block(const sim::Topology& topology, const sim::PhaseSpec& phase,
                               std::span<const sim::LaneObservation> observation);

// Phase extraction from generated text. Tagged spans win, scanned from the
// last one backwards; otherwise the phase whose mnemonic or description
// occurs last (case-insensitive); otherwise default_code. Total function.
int extract_phase(std::string_view text, const sim::Topology& topology, int default_code);

int extract_phase(std::span<const int> tokens, const Vocabulary& vocab,
                  const sim::Topology& topology, int default_code);

// counts[j] = number of responses extracting phase j.
std::vector<int> phase_histogram(std::span<const std::vector<int>> responses,
                                 const Vocabulary& vocab, const sim::Topology& topology,
                                 int default_code);

std::vector<int> phase_histogram(std::span<const int> extracted_phases, int num_phases);

}  // namespace tsc::lang
