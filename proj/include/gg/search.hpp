#pragma once

/**
 * Self-guided DVTS and the Best-of-N baseline.
 *
 * The N total paths are split into N/M subtrees. Each subtree starts from
 * one sampled root step and is then extended greedily: M candidate steps are
 * sampled, each scored with lambda_c * confidence + lambda_n * novelty, and
 * the argmax is appended (lowest index wins ties). A path ends when a
 * selected step contains \boxed{...}, when it degenerates, or after a
 * forced finalization near the depth/token limits. Answers are aggregated by
 * a chain-confidence-weighted vote.
 *
 * Subtrees run concurrently up to SearchConfig::parallelism; all state of a
 * path is private to the worker expanding it.
 */

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gg/aggregation.hpp"
#include "gg/backend.hpp"
#include "gg/metrics.hpp"
#include "gg/scoring.hpp"

namespace gg {

enum class Strategy { self_guided_dvts, best_of_n };

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);  // accepts "gg"/"bon" aliases

enum class PathStatus { active, answered, budget_exhausted, degenerate, depth_exhausted, failed };

std::string_view to_string(PathStatus s);
PathStatus path_status_from_string(std::string_view s);

struct DegenerationConfig {
  int window = 5;
  double min_distinct_word_ratio = 0.1;
};

struct SearchConfig {
  int total_paths = 32;       // N
  int beam_width = 2;         // M
  int max_depth = 200;        // T
  int token_budget = 16384;   // tau
  int finalize_margin = 512;  // reserved for the forced conclusion
  int max_step_tokens = 1024;
  ScoreWeights weights;
  int chain_k = 5;
  double temperature = 0.6;
  double top_p = 0.95;
  std::vector<std::string> step_stop_sequences{"\n\n"};
  std::string finalization_string = "**Final Answer**";
  DegenerationConfig degeneration;
  Strategy strategy = Strategy::self_guided_dvts;
  int parallelism = 8;
  std::optional<std::uint64_t> seed;

  int subtree_count() const { return total_paths / beam_width; }
  /// Throws ConfigError.
  void validate() const;
};

struct ScoredCandidate {
  StepCandidate candidate;
  StepScore score;
  bool scorable = true;  // false for empty candidates
};

struct Step {
  std::string text;
  std::vector<TokenLogProb> tokens;
  StepScore score;
  FinishReason finish_reason = FinishReason::stop_sequence;
  // Full candidate set of the expansion that produced this step.
  std::vector<ScoredCandidate> candidates;
  int selected = 0;
};

struct Finalization {
  std::string trigger;  // "tokens", "depth" or "allowance"
  std::string injected;
  std::string context;  // exact request context, injection included
  std::optional<StepCandidate> completion;
};

struct PathState {
  int subtree_id = 0;
  std::string question;
  std::vector<Step> steps;
  WordSet explored_words;
  std::int64_t token_count = 0;       // tokens of accepted steps + finalization
  std::int64_t generated_tokens = 0;  // every token generated for this subtree
  PathStatus status = PathStatus::active;
  std::optional<std::string> answer;     // raw boxed contents
  std::optional<std::string> canonical;  // normalized answer
  std::optional<double> chain_conf;
  std::optional<Finalization> finalization;
  std::string failure;
  std::vector<std::string> warnings;
  std::vector<std::int64_t> residency;  // resident tokens per round
  std::int64_t backend_calls = 0;

  int depth() const { return static_cast<int>(steps.size()); }
};

struct AnswerRecord {
  std::string answer;
  std::string canonical;
  double chain_conf = 0.0;
  double weight = 0.0;
  int subtree_id = 0;
};

struct SearchResult {
  std::string question_id;
  Strategy strategy = Strategy::self_guided_dvts;
  std::vector<PathState> paths;
  std::vector<AnswerRecord> answers;
  std::optional<std::string> final_answer;
  VoteTally tally;
  std::vector<std::string> notes;
  RunMetrics metrics;
};

namespace search {

std::string build_context(const PathState& path, const SearchConfig& config);

/// Largest per-candidate max_tokens the path may still request.
int step_allowance(const PathState& path, const SearchConfig& config);

std::vector<PathState> init_subtrees(std::string_view question, const SearchConfig& config,
                                     GenerationBackend& backend);

PathState expand_step(PathState path, const SearchConfig& config, GenerationBackend& backend);

bool should_finalize(const PathState& path, const SearchConfig& config);

PathState finalize_path(PathState path, const SearchConfig& config, GenerationBackend& backend);

bool detect_degeneration(const PathState& path, std::string_view candidate_text,
                         const DegenerationConfig& config);

/// Runs one subtree to a terminal status.
PathState run_path(PathState path, const SearchConfig& config, GenerationBackend& backend);

SearchResult run_search(std::string_view question, const SearchConfig& config, GenerationBackend& backend);

SearchResult run_best_of_n(std::string_view question, const SearchConfig& config, GenerationBackend& backend);

/// Dispatches on config.strategy.
SearchResult run_strategy(std::string_view question, const SearchConfig& config, GenerationBackend& backend);

/// Max over rounds of resident tokens summed across paths.
std::int64_t peak_concurrent_tokens(const std::vector<PathState>& paths);

}  // namespace search
}  // namespace gg
