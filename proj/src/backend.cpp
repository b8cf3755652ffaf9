#include "gg/backend.hpp"

#include <cmath>

#include "gg/error.hpp"

namespace gg {

std::string_view to_string(FinishReason r) {
  switch (r) {
    case FinishReason::stop_sequence: return "stop_sequence";
    case FinishReason::length: return "length";
    case FinishReason::end_of_text: return "end_of_text";
  }
  return "end_of_text";
}

FinishReason finish_reason_from_string(std::string_view s) {
  if (s == "stop_sequence" || s == "stop") return FinishReason::stop_sequence;
  if (s == "length") return FinishReason::length;
  if (s == "end_of_text" || s == "eos") return FinishReason::end_of_text;
  throw InvalidInput("unknown finish reason: " + std::string(s));
}

std::string_view to_string(BackendErrorKind k) {
  switch (k) {
    case BackendErrorKind::transport: return "transport";
    case BackendErrorKind::timeout: return "timeout";
    case BackendErrorKind::capability: return "capability";
    case BackendErrorKind::parse: return "parse";
    case BackendErrorKind::invalid_response: return "invalid_response";
    case BackendErrorKind::fixture_miss: return "fixture_miss";
  }
  return "transport";
}

bool BackendError::retryable() const noexcept {
  if (kind_ == BackendErrorKind::timeout) return true;
  if (kind_ != BackendErrorKind::transport) return false;
  return http_status_ == 0 || http_status_ == 408 || http_status_ == 429 || http_status_ >= 500;
}

void GenerationRequest::validate() const {
  if (n_candidates < 1) throw InvalidInput("n_candidates must be >= 1");
  if (max_tokens < 1) throw InvalidInput("max_tokens must be >= 1");
  if (!(temperature >= 0.0)) throw InvalidInput("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw InvalidInput("top_p must be in (0,1]");
}

void validate_candidates(const std::vector<StepCandidate>& candidates) {
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (c.tokens.empty() && !c.text.empty()) {
      throw BackendError(BackendErrorKind::invalid_response,
                         "candidate " + std::to_string(i) + " has text but no tokens");
    }
    for (const auto& t : c.tokens) {
      if (!std::isfinite(t.logprob) || t.logprob > 0.0) {
        throw BackendError(BackendErrorKind::invalid_response,
                           "candidate " + std::to_string(i) + " carries logprob " +
                               std::to_string(t.logprob) + " (> 0 or non-finite)");
      }
    }
  }
}

std::string join_tokens(const std::vector<TokenLogProb>& tokens) {
  std::string out;
  for (const auto& t : tokens) out += t.text;
  return out;
}

void strip_stop_suffix(StepCandidate& candidate, const std::vector<std::string>& stop_sequences) {
  if (candidate.finish_reason != FinishReason::stop_sequence) return;
  for (const auto& stop : stop_sequences) {
    if (stop.empty()) continue;
    std::string tail;
    std::size_t n = candidate.tokens.size();
    while (n > 0 && tail.size() < stop.size()) {
      tail.insert(0, candidate.tokens[n - 1].text);
      --n;
    }
    if (tail != stop) continue;
    candidate.tokens.resize(n);
    if (candidate.text.ends_with(stop)) {
      candidate.text.resize(candidate.text.size() - stop.size());
    }
    return;
  }
}

}  // namespace gg
