#include "gg/http_backend.hpp"

#include <algorithm>
#include <cctype>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

#include <httplib.h>

#include "gg/error.hpp"

namespace gg {

using nlohmann::json;

HttpBackendOptions HttpBackendOptions::from_env() {
  HttpBackendOptions o;
  if (const char* v = std::getenv("GG_BACKEND_URL")) o.base_url = v;
  if (const char* v = std::getenv("GG_BACKEND_TOKEN")) o.auth_token = v;
  if (const char* v = std::getenv("GG_MODEL_ID")) o.model_id = v;
  return o;
}

namespace wire {

json build_completion_body(const GenerationRequest& request, const std::string& model_id) {
  json body{{"model", model_id},
            {"prompt", request.context},
            {"n", request.n_candidates},
            {"max_tokens", request.max_tokens},
            {"temperature", request.temperature},
            {"top_p", request.top_p},
            {"stop", request.stop_sequences},
            {"logprobs", 1},
            {"echo", false}};
  if (request.seed) body["seed"] = *request.seed;
  return body;
}

std::optional<std::chrono::milliseconds> parse_retry_after(std::string_view value) {
  while (!value.empty() && std::isspace(static_cast<unsigned char>(value.front()))) value.remove_prefix(1);
  while (!value.empty() && std::isspace(static_cast<unsigned char>(value.back()))) value.remove_suffix(1);
  if (value.empty()) return std::nullopt;
  char* end = nullptr;
  const std::string s(value);
  const double seconds = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !(seconds >= 0.0)) return std::nullopt;  // HTTP-date form unsupported
  return std::chrono::milliseconds(static_cast<long long>(seconds * 1000.0));
}

namespace {

FinishReason map_finish(const json& choice) {
  const auto it = choice.find("finish_reason");
  if (it == choice.end() || !it->is_string()) return FinishReason::end_of_text;
  const auto reason = it->get<std::string>();
  if (reason == "length") return FinishReason::length;
  if (reason != "stop") return FinishReason::end_of_text;
  // vLLM reports the matched stop string; null or a token id means EOS.
  if (const auto sr = choice.find("stop_reason"); sr != choice.end() && !sr->is_string()) {
    return FinishReason::end_of_text;
  }
  return FinishReason::stop_sequence;
}

StepCandidate parse_choice(const json& choice, std::size_t i) {
  const auto where = "choices[" + std::to_string(i) + "]";
  if (!choice.is_object()) throw BackendError(BackendErrorKind::parse, where + " is not an object");
  StepCandidate c;
  if (const auto t = choice.find("text"); t != choice.end() && t->is_string()) {
    c.text = t->get<std::string>();
  } else {
    throw BackendError(BackendErrorKind::parse, where + ".text missing");
  }
  const auto lp = choice.find("logprobs");
  if (lp == choice.end() || !lp->is_object()) {
    throw BackendError(BackendErrorKind::capability, where + ".logprobs absent; endpoint does not expose token logprobs");
  }
  const auto toks = lp->find("tokens");
  const auto vals = lp->find("token_logprobs");
  if (toks == lp->end() || vals == lp->end() || !toks->is_array() || !vals->is_array()) {
    throw BackendError(BackendErrorKind::capability, where + ".logprobs lacks tokens/token_logprobs");
  }
  if (toks->size() != vals->size()) {
    throw BackendError(BackendErrorKind::parse, where + ": tokens and token_logprobs differ in length");
  }
  c.tokens.reserve(toks->size());
  for (std::size_t k = 0; k < toks->size(); ++k) {
    const auto& tk = (*toks)[k];
    const auto& v = (*vals)[k];
    if (!tk.is_string()) throw BackendError(BackendErrorKind::parse, where + ": non-string token");
    if (v.is_null()) {
      throw BackendError(BackendErrorKind::capability, where + ": token_logprobs[" + std::to_string(k) + "] is null");
    }
    if (!v.is_number()) throw BackendError(BackendErrorKind::parse, where + ": non-numeric logprob");
    c.tokens.push_back({tk.get<std::string>(), v.get<double>()});
  }
  c.finish_reason = map_finish(choice);
  return c;
}

}  // namespace

Generation parse_completion_response(const RawEnvelope& envelope, int requested_n) {
  if (envelope.status < 200 || envelope.status >= 300) {
    std::optional<std::chrono::milliseconds> retry_after;
    if (auto it = envelope.headers.find("retry-after"); it != envelope.headers.end()) {
      retry_after = parse_retry_after(it->second);
    }
    throw BackendError(BackendErrorKind::transport,
                       "HTTP " + std::to_string(envelope.status) + ": " + envelope.body.substr(0, 200),
                       envelope.status, retry_after);
  }
  json body;
  try {
    body = json::parse(envelope.body);
  } catch (const json::parse_error& e) {
    throw BackendError(BackendErrorKind::parse,
                       "malformed response body at offset " + std::to_string(e.byte) + ": " + e.what());
  }
  const auto choices = body.find("choices");
  if (!body.is_object() || choices == body.end() || !choices->is_array()) {
    throw BackendError(BackendErrorKind::parse, "response has no choices array");
  }
  std::vector<std::pair<long long, StepCandidate>> indexed;
  for (std::size_t i = 0; i < choices->size(); ++i) {
    const auto& ch = (*choices)[i];
    long long idx = static_cast<long long>(i);
    if (ch.is_object()) {
      if (auto it = ch.find("index"); it != ch.end() && it->is_number_integer()) idx = it->get<long long>();
    }
    indexed.emplace_back(idx, parse_choice(ch, i));
  }
  std::stable_sort(indexed.begin(), indexed.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  Generation out;
  for (auto& [idx, c] : indexed) out.candidates.push_back(std::move(c));
  validate_candidates(out.candidates);
  if (static_cast<int>(out.candidates.size()) < requested_n) {
    out.shortfall = "server returned " + std::to_string(out.candidates.size()) + " of " +
                    std::to_string(requested_n) + " requested choices";
  } else if (static_cast<int>(out.candidates.size()) > requested_n) {
    out.candidates.resize(static_cast<std::size_t>(requested_n));
  }
  return out;
}

json serialize_choices(const std::vector<StepCandidate>& candidates) {
  json arr = json::array();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    json tokens = json::array();
    json values = json::array();
    for (const auto& t : c.tokens) {
      tokens.push_back(t.text);
      values.push_back(t.logprob);
    }
    json choice{{"index", i},
                {"text", c.text},
                {"logprobs", {{"tokens", tokens}, {"token_logprobs", values}}}};
    switch (c.finish_reason) {
      case FinishReason::stop_sequence: choice["finish_reason"] = "stop"; break;
      case FinishReason::length: choice["finish_reason"] = "length"; break;
      case FinishReason::end_of_text:
        choice["finish_reason"] = "stop";
        choice["stop_reason"] = nullptr;
        break;
    }
    arr.push_back(std::move(choice));
  }
  return arr;
}

}  // namespace wire

// Bounded set of keep-alive clients; acquire() blocks while all are in use.
class HttpBackend::Pool {
 public:
  Pool(std::string scheme_host_port, const HttpBackendOptions& o)
      : scheme_host_port_(std::move(scheme_host_port)), options_(o) {}

  class Lease {
   public:
    Lease(Pool& pool, std::unique_ptr<httplib::Client> c) : pool_(pool), client_(std::move(c)) {}
    ~Lease() { pool_.release(std::move(client_)); }
    Lease(const Lease&) = delete;
    Lease& operator=(const Lease&) = delete;
    httplib::Client& operator*() { return *client_; }
    httplib::Client* operator->() { return client_.get(); }

   private:
    Pool& pool_;
    std::unique_ptr<httplib::Client> client_;
  };

  Lease acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !idle_.empty() || created_ < std::max(1, options_.pool_size); });
    if (!idle_.empty()) {
      auto c = std::move(idle_.back());
      idle_.pop_back();
      return Lease(*this, std::move(c));
    }
    ++created_;
    lock.unlock();
    return Lease(*this, make_client());
  }

 private:
  std::unique_ptr<httplib::Client> make_client() {
    auto c = std::make_unique<httplib::Client>(scheme_host_port_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
    c->set_connection_timeout(secs.count(), usecs.count());
    c->set_read_timeout(secs.count(), usecs.count());
    c->set_write_timeout(secs.count(), usecs.count());
    c->set_keep_alive(true);
    if (!options_.auth_token.empty()) c->set_bearer_token_auth(options_.auth_token);
    return c;
  }

  void release(std::unique_ptr<httplib::Client> c) {
    {
      std::lock_guard lock(mu_);
      idle_.push_back(std::move(c));
    }
    cv_.notify_one();
  }

  std::string scheme_host_port_;
  HttpBackendOptions options_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::unique_ptr<httplib::Client>> idle_;
  int created_ = 0;
};

HttpBackend::HttpBackend(HttpBackendOptions options) : options_(std::move(options)) {
  if (options_.base_url.empty()) throw ConfigError("HTTP backend requires a base URL (GG_BACKEND_URL)");
  if (options_.model_id.empty()) throw ConfigError("HTTP backend requires a model id (GG_MODEL_ID)");
  std::string url = options_.base_url;
  while (url.ends_with('/')) url.pop_back();
  if (url.ends_with("/v1")) url.resize(url.size() - 3);
  const auto scheme_end = url.find("://");
  const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  std::string host = url;
  if (path_start != std::string::npos) {
    host = url.substr(0, path_start);
    path_prefix_ = url.substr(path_start);
  }
  pool_ = std::make_unique<Pool>(host, options_);
}

HttpBackend::~HttpBackend() = default;

RawEnvelope HttpBackend::http_round_trip(const GenerationRequest& request) {
  const auto body = wire::build_completion_body(request, options_.model_id).dump();
  auto client = pool_->acquire();
  const auto started = std::chrono::steady_clock::now();
  auto res = client->Post(path_prefix_ + "/v1/completions", body, "application/json");
  if (!res) {
    const auto err = res.error();
    const auto elapsed = std::chrono::steady_clock::now() - started;
    const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                           (err == httplib::Error::Read && elapsed >= options_.timeout * 95 / 100);
    throw BackendError(timed_out ? BackendErrorKind::timeout : BackendErrorKind::transport,
                       "request to " + options_.base_url + " failed: " + httplib::to_string(err));
  }
  RawEnvelope env;
  env.status = res->status;
  env.body = res->body;
  for (const auto& [k, v] : res->headers) {
    std::string key = k;
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    env.headers[key] = v;
  }
  return env;
}

Generation HttpBackend::generate(const GenerationRequest& request) {
  request.validate();
  auto backoff = options_.backoff_initial;
  for (int attempt = 0;; ++attempt) {
    try {
      return wire::parse_completion_response(http_round_trip(request), request.n_candidates);
    } catch (const BackendError& e) {
      if (!e.retryable() || attempt >= options_.max_retries) throw;
      auto wait = backoff;
      if (auto ra = e.retry_after()) wait = std::max(wait, std::min(*ra, options_.max_retry_after));
      std::this_thread::sleep_for(wait);
      backoff *= 2;
    }
  }
}

BackendHealth HttpBackend::health() {
  BackendHealth h;
  h.model_id = options_.model_id;
  GenerationRequest probe;
  probe.context = "1 + 1 =";
  probe.max_tokens = 1;
  probe.temperature = 0.0;
  probe.top_p = 1.0;
  try {
    auto env = http_round_trip(probe);
    h.reachable = env.status >= 200 && env.status < 300;
    if (h.reachable) {
      wire::parse_completion_response(env, 1);
      h.supports_logprobs = true;
    }
  } catch (const BackendError& e) {
    if (e.kind() == BackendErrorKind::capability) h.reachable = true;
  }
  return h;
}

}  // namespace gg
