#pragma once

/**
 * Generation backend contract.
 *
 * The engine hands a backend a full text context and asks for
 * `n_candidates` continuations, each with per-token natural-log
 * probabilities. Implementations must be safe for concurrent generate()
 * calls. Any logprob > 0 is rejected at the boundary by
 * validate_candidates() before a candidate can reach scoring.
 */

#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gg/scoring.hpp"

namespace gg {

enum class FinishReason { stop_sequence, length, end_of_text };

std::string_view to_string(FinishReason r);
FinishReason finish_reason_from_string(std::string_view s);

struct GenerationRequest {
  std::string context;
  int n_candidates = 1;
  int max_tokens = 1;
  double temperature = 0.6;
  double top_p = 0.95;
  std::vector<std::string> stop_sequences;
  bool want_logprobs = true;
  std::optional<std::uint64_t> seed;

  void validate() const;
};

struct StepCandidate {
  std::string text;
  std::vector<TokenLogProb> tokens;
  FinishReason finish_reason = FinishReason::stop_sequence;

  bool operator==(const StepCandidate&) const = default;
};

/// generate() result. `shortfall` explains a list shorter than requested.
struct Generation {
  std::vector<StepCandidate> candidates;
  std::string shortfall;
};

struct BackendHealth {
  bool reachable = false;
  std::string model_id;
  bool supports_logprobs = false;
};

enum class BackendErrorKind {
  transport,         // connection failure or non-2xx status
  timeout,
  capability,        // response lacks token logprobs
  parse,             // malformed body
  invalid_response,  // well-formed but violates the contract (e.g. logprob > 0)
  fixture_miss,      // scripted backend: no record for this context
};

std::string_view to_string(BackendErrorKind k);

class BackendError : public std::runtime_error {
 public:
  BackendError(BackendErrorKind kind, const std::string& what, int http_status = 0,
               std::optional<std::chrono::milliseconds> retry_after = std::nullopt)
      : std::runtime_error(what), kind_(kind), http_status_(http_status), retry_after_(retry_after) {}

  BackendErrorKind kind() const noexcept { return kind_; }
  int http_status() const noexcept { return http_status_; }
  std::optional<std::chrono::milliseconds> retry_after() const noexcept { return retry_after_; }

  /// Transport errors on 429/5xx/connection loss and timeouts may be retried.
  bool retryable() const noexcept;

 private:
  BackendErrorKind kind_;
  int http_status_;
  std::optional<std::chrono::milliseconds> retry_after_;
};

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;

  virtual Generation generate(const GenerationRequest& request) = 0;
  virtual BackendHealth health() = 0;
};

/// Enforces the StepCandidate invariants; throws BackendError(invalid_response).
void validate_candidates(const std::vector<StepCandidate>& candidates);

/// Concatenated token texts.
std::string join_tokens(const std::vector<TokenLogProb>& tokens);

/// When a stop-terminated candidate still carries the stop sequence as its
/// trailing tokens (some servers include it), drop those tokens and the
/// matching text suffix. Leaves the candidate alone otherwise.
void strip_stop_suffix(StepCandidate& candidate, const std::vector<std::string>& stop_sequences);

}  // namespace gg
