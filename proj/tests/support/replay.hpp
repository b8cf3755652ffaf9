#pragma once

// Offline recomputation of a trace from its own contents, using the
// independent oracles rather than the engine.

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "gg/aggregation.hpp"
#include "gg/harness.hpp"
#include "oracle.hpp"

namespace replay {

inline bool close(double a, double b, double tol = 1e-9) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

/// Empty when every stored score, chain confidence, vote and token counter
/// matches the recomputation; otherwise the first mismatch.
inline std::string check(const gg::harness::TraceFile& t) {
  const auto& cfg = t.header.at("config");
  const double lc = cfg.at("lambda_c").get<double>();
  const double ln = cfg.at("lambda_n").get<double>();
  const int k = cfg.at("chain_k").get<int>();
  const bool uniform = t.result.at("weighting") == "uniform";
  std::vector<std::pair<std::string, double>> votes;
  std::int64_t generated = 0;
  for (const auto& p : t.paths) {
    std::set<std::string> explored;
    std::vector<double> confs;
    const auto sid = std::to_string(p.at("subtree_id").get<int>());
    std::int64_t path_generated = 0;
    for (const auto& s : p.at("steps")) {
      const auto& cands = s.at("candidates");
      for (const auto& c : cands) {
        std::vector<double> lps;
        for (const auto& tok : c.at("tokens")) lps.push_back(tok.at(1).get<double>());
        path_generated += static_cast<std::int64_t>(lps.size());
        if (!c.at("scorable").get<bool>()) continue;
        const auto& sc = c.at("score");
        const double conf = oracle::naive_confidence(lps);
        const auto words = oracle::naive_words(c.at("text").get<std::string>());
        const double nov = words.empty() ? 0.0 : oracle::naive_novelty(words, explored);
        if (!close(sc.at("confidence").get<double>(), conf)) return "path " + sid + ": confidence";
        if (!close(sc.at("novelty").get<double>(), nov)) return "path " + sid + ": novelty";
        if (!close(sc.at("reward").get<double>(), lc * conf + ln * nov)) return "path " + sid + ": reward";
      }
      const auto& chosen = cands.at(s.at("selected").get<std::size_t>());
      double best = -1e300;
      for (const auto& c : cands) {
        if (c.at("scorable").get<bool>()) best = std::max(best, c.at("score").at("reward").get<double>());
      }
      if (chosen.at("score").at("reward").get<double>() != best) return "path " + sid + ": selection is not argmax";
      for (const auto& w : oracle::naive_words(chosen.at("text").get<std::string>())) explored.insert(w);
      confs.push_back(chosen.at("score").at("confidence").get<double>());
    }
    const auto& fin = p.at("finalization");
    if (!fin.is_null() && !fin.at("completion").is_null()) {
      path_generated += static_cast<std::int64_t>(fin.at("completion").at("tokens").size());
    }
    if (p.at("generated_tokens").get<std::int64_t>() != path_generated) return "path " + sid + ": generated_tokens";
    generated += path_generated;
    if (p.at("status") == "answered") {
      const double chain = oracle::naive_chain(confs, k);
      if (!close(p.at("chain_conf").get<double>(), chain)) return "path " + sid + ": chain_conf";
      votes.emplace_back(gg::aggregation::normalize_answer(p.at("answer").get<std::string>()), uniform ? 1.0 : chain);
    }
  }
  const auto& metrics = t.result.at("metrics");
  if (!metrics.is_null() && metrics.at("total_generated_tokens").get<std::int64_t>() != generated) {
    return "total_generated_tokens";
  }
  const auto& stored = t.result.at("final_answer");
  if (votes.empty()) return stored.is_null() ? "" : "answer without votes";
  if (stored.is_null() || stored.get<std::string>() != oracle::naive_vote(votes)) return "final answer";
  return {};
}

}  // namespace replay
