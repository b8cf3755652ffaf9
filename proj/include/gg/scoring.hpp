#pragma once

/**
 * Intrinsic step signals.
 *
 * A step's confidence is the mean natural-log probability of its tokens,
 * mapped to (0,1] through exp (the geometric-mean token probability).
 * Novelty is the fraction of the step's words not yet present in the
 * path's explored-word set. The step reward is a weighted sum of both, and
 * the chain confidence is a recency-weighted mean of the last k step
 * confidences.
 *
 * Everything here is pure and thread-safe.
 */

#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace gg {

struct TokenLogProb {
  std::string text;
  double logprob = 0.0;  // natural log, <= 0

  bool operator==(const TokenLogProb&) const = default;
};

using WordSet = std::unordered_set<std::string>;

struct ConfidenceScore {
  double log_confidence = 0.0;
  double confidence = 1.0;
};

struct StepScore {
  double log_confidence = 0.0;
  double confidence = 1.0;
  double novelty = 0.0;
  double reward = 0.0;
};

struct ScoreWeights {
  double lambda_c = 1.0;
  double lambda_n = 0.5;

  void validate() const;
};

namespace scoring {

// Word normalization shared by novelty and degeneration checks: whitespace
// split, surrounding ASCII punctuation stripped, ASCII lowercased. Tokens
// that are pure punctuation vanish.
std::string normalize_word(std::string_view raw);
std::vector<std::string> split_words(std::string_view text);

/// Mean token logprob and its exp. Throws InvalidInput on an empty list.
ConfidenceScore step_confidence(std::span<const TokenLogProb> tokens);

/// Fraction of `step_words` absent from `explored`. Words are compared as
/// given; callers pass the output of split_words. Throws on empty input.
double step_novelty(std::span<const std::string> step_words, const WordSet& explored);

double step_reward(const ConfidenceScore& score, double novelty, const ScoreWeights& weights);

/// Recency-weighted mean of `confidences` (oldest first): weight l for the
/// l-th entry. Callers pass the last min(k, chain length) confidences.
double chain_confidence(std::span<const double> confidences);

/// Convenience: applies chain_confidence to the tail of `confidences`.
double chain_confidence_tail(std::span<const double> confidences, int k);

}  // namespace scoring
}  // namespace gg
