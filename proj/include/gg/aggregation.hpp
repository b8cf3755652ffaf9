#pragma once

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gg {

struct ExtractedAnswer {
  std::string raw;        // contents of the last \boxed{...}
  std::string canonical;  // normalize_answer(raw)
  int source_path = -1;
};

struct TallyEntry {
  double total_weight = 0.0;
  int supporters = 0;
  double max_weight = 0.0;
};

struct VoteTally {
  std::map<std::string, TallyEntry> entries;  // keyed by canonical answer
};

struct VoteOutcome {
  std::string winner;
  VoteTally tally;
};

struct WeightedAnswer {
  std::string canonical;
  double weight = 1.0;
};

/// Thrown by weighted_vote when there is nothing to vote on (abstention).
class NoAnswerError : public std::runtime_error {
 public:
  NoAnswerError() : std::runtime_error("no answers to vote on") {}
};

namespace aggregation {

inline constexpr std::string_view kBoxedMarker = "\\boxed{";

bool has_boxed_marker(std::string_view text);

/// Brace-balanced contents of the last \boxed{...}; nullopt when the marker
/// is absent or its braces never close.
std::optional<ExtractedAnswer> extract_answer(std::string_view text);

/// Total. Trims, strips outer $...$, collapses whitespace, and renders
/// integers, decimals, a/b and \frac{a}{b} in one canonical numeric form.
std::string normalize_answer(std::string_view raw);

/// Argmax of summed weight per canonical answer. Ties (relative 1e-12) go to
/// the larger single-supporter weight, then the lexicographically smaller
/// string. Throws NoAnswerError on empty input.
VoteOutcome weighted_vote(std::span<const WeightedAnswer> answers);

}  // namespace aggregation
}  // namespace gg
