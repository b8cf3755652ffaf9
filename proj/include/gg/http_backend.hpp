#pragma once

/**
 * Client for OpenAI-compatible completion endpoints (POST {base}/v1/completions).
 *
 * Requests carry model, prompt, n, max_tokens, temperature, top_p, stop,
 * logprobs=1 and echo=false (plus seed when set). Each choice must return
 * logprobs.tokens and logprobs.token_logprobs; a response without them is a
 * capability error. Transport failures on 429/5xx/connection loss and
 * timeouts are retried with exponential backoff, honoring Retry-After.
 */

#include <chrono>
#include <map>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "gg/backend.hpp"

namespace gg {

struct HttpBackendOptions {
  std::string base_url;  // e.g. "http://localhost:8000"
  std::string model_id;
  std::string auth_token;  // bearer token, empty for none
  std::chrono::milliseconds timeout{120'000};
  int max_retries = 3;
  std::chrono::milliseconds backoff_initial{500};
  std::chrono::milliseconds max_retry_after{60'000};
  int pool_size = 8;

  /// Reads GG_BACKEND_URL, GG_BACKEND_TOKEN and GG_MODEL_ID.
  static HttpBackendOptions from_env();
};

/// One HTTP exchange as seen on the wire.
struct RawEnvelope {
  int status = 0;
  std::map<std::string, std::string> headers;  // lower-cased names
  std::string body;
};

namespace wire {

nlohmann::json build_completion_body(const GenerationRequest& request, const std::string& model_id);

/// Parses a completion response. Non-2xx -> transport error (with Retry-After
/// for 429), missing logprobs -> capability error, malformed JSON -> parse
/// error naming the byte offset.
Generation parse_completion_response(const RawEnvelope& envelope, int requested_n);

/// Inverse of parse for the fields the engine consumes.
nlohmann::json serialize_choices(const std::vector<StepCandidate>& candidates);

std::optional<std::chrono::milliseconds> parse_retry_after(std::string_view value);

}  // namespace wire

class HttpBackend final : public GenerationBackend {
 public:
  explicit HttpBackend(HttpBackendOptions options);
  ~HttpBackend() override;

  HttpBackend(const HttpBackend&) = delete;
  HttpBackend& operator=(const HttpBackend&) = delete;

  Generation generate(const GenerationRequest& request) override;
  BackendHealth health() override;

  /// One POST without retries. Throws BackendError(transport|timeout) when no
  /// HTTP response was received at all.
  RawEnvelope http_round_trip(const GenerationRequest& request);

  const HttpBackendOptions& options() const { return options_; }

 private:
  class Pool;

  HttpBackendOptions options_;
  std::string path_prefix_;
  std::unique_ptr<Pool> pool_;
};

}  // namespace gg
