#pragma once

// Small helpers for hand-built fixtures.

#include <cmath>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "gg/backend.hpp"
#include "gg/scripted_backend.hpp"

namespace fx {

/// Candidate whose tokens are its words, each with logprob log(conf), so the
/// step confidence is exactly `conf` up to rounding.
inline gg::StepCandidate step(const std::string& text, double conf,
                              gg::FinishReason fr = gg::FinishReason::stop_sequence) {
  gg::StepCandidate c;
  std::istringstream in(text);
  std::string w;
  const double lp = std::log(conf);
  while (in >> w) c.tokens.push_back({c.tokens.empty() ? w : " " + w, lp});
  c.text = gg::join_tokens(c.tokens);
  c.finish_reason = fr;
  return c;
}

inline gg::FixtureRecord rec(std::string context, std::vector<gg::StepCandidate> cands) {
  return {std::move(context), std::nullopt, std::nullopt, std::move(cands)};
}

inline gg::FixtureRecord full(std::string context, std::vector<gg::StepCandidate> cands) {
  return {std::move(context), std::nullopt, gg::RequestMode::full, std::move(cands)};
}

inline std::string ctx(const std::string& q, const std::vector<std::string>& steps) {
  std::string out = q;
  for (const auto& s : steps) out += "\n\n" + s;
  return out;
}

/// Records every request that passes through.
class SpyBackend final : public gg::GenerationBackend {
 public:
  explicit SpyBackend(gg::GenerationBackend& inner) : inner_(inner) {}

  gg::Generation generate(const gg::GenerationRequest& request) override {
    {
      std::lock_guard lock(mu_);
      requests_.push_back(request);
    }
    return inner_.generate(request);
  }
  gg::BackendHealth health() override { return inner_.health(); }

  std::vector<gg::GenerationRequest> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }

 private:
  gg::GenerationBackend& inner_;
  mutable std::mutex mu_;
  std::vector<gg::GenerationRequest> requests_;
};

}  // namespace fx
