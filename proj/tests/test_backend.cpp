#include "doctest.h"

#include <atomic>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "gg/error.hpp"
#include "gg/http_backend.hpp"
#include "gg/scripted_backend.hpp"
#include "support/wire_capture.hpp"

using namespace gg;
using nlohmann::json;

namespace {

StepCandidate cand(std::vector<std::pair<std::string, double>> toks,
                   FinishReason fr = FinishReason::stop_sequence) {
  StepCandidate c;
  for (auto& [t, lp] : toks) {
    c.tokens.push_back({t, lp});
    c.text += t;
  }
  c.finish_reason = fr;
  return c;
}

GenerationRequest step_request(std::string context, int n, int max_tokens = 64) {
  GenerationRequest r;
  r.context = std::move(context);
  r.n_candidates = n;
  r.max_tokens = max_tokens;
  r.stop_sequences = {"\n\n"};
  return r;
}

}  // namespace

TEST_CASE("scripted backend returns recorded candidates in order") {
  FixtureRecord rec{"What is 6*7?", std::nullopt, std::nullopt,
                    {cand({{"A", -0.1}}), cand({{"B", -0.2}}), cand({{"C", -0.3}})}};
  ScriptedBackend b(ScriptedFixture({rec}));
  auto g = b.generate(step_request("What is 6*7?", 2));
  REQUIRE(g.candidates.size() == 2);
  CHECK(g.candidates[0].text == "A");
  CHECK(g.candidates[1].text == "B");
  CHECK(g.shortfall.empty());

  auto more = b.generate(step_request("  What is 6*7?\n", 5));
  CHECK(more.candidates.size() == 3);
  CHECK_FALSE(more.shortfall.empty());
  CHECK(b.calls() == 2);
  CHECK(b.health().reachable);
}

TEST_CASE("scripted backend miss names the context") {
  ScriptedBackend b(ScriptedFixture({{"known", std::nullopt, std::nullopt, {cand({{"x", -1}})}}}));
  try {
    b.generate(step_request("unknown context here", 1));
    FAIL("expected a miss");
  } catch (const BackendError& e) {
    CHECK(e.kind() == BackendErrorKind::fixture_miss);
    CHECK(std::string(e.what()).find("unknown context") != std::string::npos);
    CHECK_FALSE(e.retryable());
  }
}

TEST_CASE("scripted backend truncates to max_tokens") {
  ScriptedBackend b(ScriptedFixture(
      {{"q", std::nullopt, std::nullopt, {cand({{"a", -0.1}, {"b", -0.2}, {"c", -0.3}})}}}));
  auto g = b.generate(step_request("q", 1, 2));
  REQUIRE(g.candidates.size() == 1);
  CHECK(g.candidates[0].tokens.size() == 2);
  CHECK(g.candidates[0].text == "ab");
  CHECK(g.candidates[0].finish_reason == FinishReason::length);
}

TEST_CASE("fixture keys: seed and mode specific records win over wildcards") {
  ScriptedFixture f({{"q", std::nullopt, std::nullopt, {cand({{"any", -1}})}},
                     {"q", 3, std::nullopt, {cand({{"seed3", -1}})}},
                     {"q", std::nullopt, RequestMode::full, {cand({{"full", -1}})}}});
  CHECK(f.lookup("q")[0].text == "any");
  CHECK(f.lookup("q", 3)[0].text == "seed3");
  CHECK(f.lookup("q", 4)[0].text == "any");
  CHECK(f.lookup("q", std::nullopt, RequestMode::full)[0].text == "full");
  CHECK(f.lookup("q", 3, RequestMode::full)[0].text == "seed3");
}

TEST_CASE("invalid fixtures are rejected") {
  CHECK_THROWS_AS(ScriptedFixture({{"q", std::nullopt, std::nullopt, {cand({{"a", 0.3}})}}}), InvalidInput);
  CHECK_THROWS_AS(ScriptedFixture({{"q", std::nullopt, std::nullopt, {}}}), InvalidInput);
  CHECK_THROWS_AS(ScriptedFixture({{"q", std::nullopt, std::nullopt, {cand({{"a", -1}})}},
                                   {" q ", std::nullopt, std::nullopt, {cand({{"b", -1}})}}}),
                  InvalidInput);

  std::istringstream bad_line("# header\n{\"context\": \"q\", \"candidates\": [{\"tokens\": [[\"a\", -0.1]]}]}\n\n{oops\n");
  try {
    ScriptedFixture::parse(bad_line, "f.jsonl");
    FAIL("expected a parse error");
  } catch (const InvalidInput& e) {
    CHECK(std::string(e.what()).find("f.jsonl:4") != std::string::npos);
  }
  std::istringstream bad_logprob("{\"context\": \"q\", \"candidates\": [{\"tokens\": [[\"a\", 1.5]]}]}\n");
  CHECK_THROWS_AS(ScriptedFixture::parse(bad_logprob), InvalidInput);
}

TEST_CASE("fixture write/parse round trip") {
  ScriptedFixture f({{"q1", std::nullopt, std::nullopt, {cand({{"a", -0.125}, {" b", -2.5}})}},
                     {"q1\n\nstep", 7, RequestMode::full, {cand({{"\\boxed{1}", -0.01}}, FinishReason::end_of_text)}}});
  std::ostringstream out;
  f.write(out);
  std::istringstream in(out.str());
  const auto back = ScriptedFixture::parse(in);
  CHECK(back.records() == f.records());
  std::ostringstream again;
  back.write(again);
  CHECK(again.str() == out.str());
}

TEST_CASE("candidate validation") {
  CHECK_NOTHROW(validate_candidates({cand({{"a", 0.0}})}));
  CHECK_THROWS_AS(validate_candidates({cand({{"a", 1e-9}})}), BackendError);
  CHECK_THROWS_AS(validate_candidates({cand({{"a", std::nan("")}})}), BackendError);
  StepCandidate textless_tokens;
  textless_tokens.text = "abc";
  CHECK_THROWS_AS(validate_candidates({textless_tokens}), BackendError);
  CHECK_NOTHROW(validate_candidates({StepCandidate{}}));
}

TEST_CASE("request validation") {
  auto r = step_request("q", 1);
  CHECK_NOTHROW(r.validate());
  r.n_candidates = 0;
  CHECK_THROWS_AS(r.validate(), InvalidInput);
  r = step_request("q", 1, 0);
  CHECK_THROWS_AS(r.validate(), InvalidInput);
}

TEST_CASE("golden wire captures parse field-exact") {
  const auto caps = wirecap::load_dir(std::filesystem::path(GG_TEST_DATA_DIR) / "wire");
  CHECK(caps.size() >= 5);
  for (const auto& c : caps) {
    CHECK_MESSAGE(wirecap::check(c).empty(), c.name, ": ", wirecap::check(c));
  }
}

TEST_CASE("completion request body") {
  auto r = step_request("Q: 1+1?", 4, 100);
  r.seed = 9;
  const auto body = wire::build_completion_body(r, "m");
  CHECK(body["model"] == "m");
  CHECK(body["prompt"] == "Q: 1+1?");
  CHECK(body["n"] == 4);
  CHECK(body["max_tokens"] == 100);
  CHECK(body["stop"] == json::array({"\n\n"}));
  CHECK(body["logprobs"] == 1);
  CHECK(body["echo"] == false);
  CHECK(body["seed"] == 9);
  r.seed.reset();
  CHECK_FALSE(wire::build_completion_body(r, "m").contains("seed"));
}

TEST_CASE("retry-after parsing") {
  CHECK(wire::parse_retry_after("3")->count() == 3000);
  CHECK(wire::parse_retry_after(" 0.5 ")->count() == 500);
  CHECK_FALSE(wire::parse_retry_after("Wed, 21 Oct 2015 07:28:00 GMT"));
  CHECK_FALSE(wire::parse_retry_after("-1"));
}

TEST_CASE("backend error retry classification") {
  CHECK(BackendError(BackendErrorKind::timeout, "t").retryable());
  CHECK(BackendError(BackendErrorKind::transport, "conn").retryable());
  CHECK(BackendError(BackendErrorKind::transport, "x", 503).retryable());
  CHECK_FALSE(BackendError(BackendErrorKind::transport, "x", 404).retryable());
  CHECK_FALSE(BackendError(BackendErrorKind::capability, "x").retryable());
  CHECK_FALSE(BackendError(BackendErrorKind::parse, "x").retryable());
}

namespace {

struct LocalServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;

  LocalServer() = default;
  void start() {
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LocalServer() {
    server.stop();
    if (thread.joinable()) thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

json ok_body(int n) {
  std::vector<StepCandidate> cs;
  for (int i = 0; i < n; ++i) cs.push_back(cand({{"tok" + std::to_string(i), -0.25}, {"\n\n", -0.01}}));
  return json{{"choices", wire::serialize_choices(cs)}};
}

}  // namespace

TEST_CASE("http backend against a local server") {
  LocalServer srv;
  std::atomic<int> hits{0};
  json last_body;
  std::string last_auth;
  std::mutex mu;
  srv.server.Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
    const int hit = hits.fetch_add(1);
    {
      std::lock_guard lock(mu);
      last_body = json::parse(req.body);
      last_auth = req.get_header_value("Authorization");
    }
    if (hit == 0) {
      res.status = 429;
      res.set_header("Retry-After", "0");
      res.set_content("{\"message\": \"slow down\"}", "application/json");
      return;
    }
    const int n = json::parse(req.body)["n"].get<int>();
    res.set_content(ok_body(n).dump(), "application/json");
  });
  srv.start();

  HttpBackendOptions o;
  o.base_url = srv.url() + "/v1";
  o.model_id = "test-model";
  o.auth_token = "secret";
  o.backoff_initial = std::chrono::milliseconds(1);
  o.timeout = std::chrono::milliseconds(5000);
  HttpBackend b(o);

  auto g = b.generate(step_request("Q", 2, 16));
  CHECK(hits.load() == 2);
  REQUIRE(g.candidates.size() == 2);
  CHECK(g.candidates[0].text == "tok0\n\n");
  CHECK(g.candidates[1].tokens[0].text == "tok1");
  CHECK(last_body["model"] == "test-model");
  CHECK(last_body["n"] == 2);
  CHECK(last_auth == "Bearer secret");

  const auto h = b.health();
  CHECK(h.reachable);
  CHECK(h.supports_logprobs);
}

TEST_CASE("http backend gives up after max_retries and reports capability errors") {
  LocalServer srv;
  std::atomic<int> hits{0};
  srv.server.Post("/v1/completions", [&](const httplib::Request&, httplib::Response& res) {
    hits.fetch_add(1);
    res.status = 503;
    res.set_content("overloaded", "text/plain");
  });
  srv.server.Post("/nolog/v1/completions", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices": [{"index": 0, "text": "x", "finish_reason": "stop"}]})", "application/json");
  });
  srv.start();

  HttpBackendOptions o;
  o.base_url = srv.url();
  o.model_id = "m";
  o.max_retries = 2;
  o.backoff_initial = std::chrono::milliseconds(1);
  HttpBackend b(o);
  try {
    b.generate(step_request("Q", 1));
    FAIL("expected failure");
  } catch (const BackendError& e) {
    CHECK(e.kind() == BackendErrorKind::transport);
    CHECK(e.http_status() == 503);
  }
  CHECK(hits.load() == 3);

  o.base_url = srv.url() + "/nolog";
  HttpBackend nolog(o);
  try {
    nolog.generate(step_request("Q", 1));
    FAIL("expected capability error");
  } catch (const BackendError& e) {
    CHECK(e.kind() == BackendErrorKind::capability);
  }
  const auto h = nolog.health();
  CHECK(h.reachable);
  CHECK_FALSE(h.supports_logprobs);
}

TEST_CASE("http backend reports unreachable servers") {
  HttpBackendOptions o;
  o.base_url = "http://127.0.0.1:1";
  o.model_id = "m";
  o.max_retries = 0;
  o.timeout = std::chrono::milliseconds(500);
  HttpBackend b(o);
  CHECK_THROWS_AS(b.generate(step_request("Q", 1)), BackendError);
  CHECK_FALSE(b.health().reachable);
}
