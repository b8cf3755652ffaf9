#pragma once

// Random scripted reasoning trees, their fixture encoding, and an exhaustive
// argmax-at-every-node walker used as the search oracle.

#include <memory>
#include <mutex>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "gg/backend.hpp"
#include "gg/scripted_backend.hpp"
#include "oracle.hpp"

namespace trees {

struct Node {
  std::string text;
  std::vector<gg::TokenLogProb> tokens;
  std::vector<Node> children;  // the M candidates offered after this node
};

struct Tree {
  std::string question;
  std::vector<Node> roots;
};

inline const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> v{"we", "let", "sum", "the", "root", "factor", "square", "prime",
                                          "angle", "side", "count", "ways", "mod", "term", "ratio", "so"};
  return v;
}

inline Node make_node(std::mt19937_64& rng, int& serial, bool leaf, const std::vector<std::string>& answers) {
  std::uniform_int_distribution<int> nwords(2, 7);
  std::uniform_int_distribution<std::size_t> pick(0, vocabulary().size() - 1);
  std::uniform_real_distribution<double> lp(-2.5, -0.01);
  std::vector<std::string> words;
  words.push_back("n" + std::to_string(serial++));  // unique per node, rules out exact repeats
  const int n = nwords(rng);
  for (int i = 0; i < n; ++i) words.push_back(vocabulary()[pick(rng)]);
  if (leaf) {
    std::uniform_int_distribution<std::size_t> a(0, answers.size() - 1);
    words.push_back("\\boxed{" + answers[a(rng)] + "}");
  }
  Node node;
  for (std::size_t i = 0; i < words.size(); ++i) {
    gg::TokenLogProb t{(i == 0 ? "" : " ") + words[i], lp(rng)};
    node.text += t.text;
    node.tokens.push_back(std::move(t));
  }
  return node;
}

inline void grow(Node& node, std::mt19937_64& rng, int& serial, int depth, int max_depth, int m,
                 const std::vector<std::string>& answers) {
  if (depth >= max_depth) return;
  std::bernoulli_distribution stop(0.15);
  for (int i = 0; i < m; ++i) {
    const bool leaf = depth + 1 >= max_depth || stop(rng);
    node.children.push_back(make_node(rng, serial, leaf, answers));
    if (!leaf) grow(node.children.back(), rng, serial, depth + 1, max_depth, m, answers);
  }
}

/// Tree whose every root-to-leaf path ends in a boxed answer within max_depth steps.
inline Tree random_tree(std::uint64_t seed, int subtrees, int m, int max_depth) {
  std::mt19937_64 rng(seed);
  int serial = 0;
  const std::vector<std::string> answers{"7", "12", "0.5", "\\frac{1}{2}", "42"};
  Tree t;
  t.question = "Q" + std::to_string(seed) + ": compute the value.";
  for (int j = 0; j < subtrees; ++j) {
    const bool leaf = max_depth <= 1;
    t.roots.push_back(make_node(rng, serial, leaf, answers));
    if (!leaf) grow(t.roots.back(), rng, serial, 1, max_depth, m, answers);
  }
  return t;
}

inline void add_records(const Node& node, const std::string& context, std::vector<gg::FixtureRecord>& out) {
  if (node.children.empty()) return;
  gg::FixtureRecord r;
  r.context = context;
  for (const auto& c : node.children) r.candidates.push_back({c.text, c.tokens, gg::FinishReason::stop_sequence});
  out.push_back(r);
  for (const auto& c : node.children) add_records(c, context + "\n\n" + c.text, out);
}

inline gg::ScriptedFixture to_fixture(const Tree& t) {
  std::vector<gg::FixtureRecord> records;
  gg::FixtureRecord root;
  root.context = t.question;
  for (const auto& r : t.roots) root.candidates.push_back({r.text, r.tokens, gg::FinishReason::stop_sequence});
  records.push_back(root);
  for (const auto& r : t.roots) add_records(r, t.question + "\n\n" + r.text, records);
  return gg::ScriptedFixture(std::move(records));
}

struct OraclePath {
  std::vector<std::string> texts;
  std::string answer;  // raw boxed contents
  double chain_conf = 0.0;
};

struct OracleResult {
  std::vector<OraclePath> paths;
  std::string winner;  // canonical, via the engine's normalizer
};

inline std::vector<double> logprobs_of(const Node& n) {
  std::vector<double> out;
  for (const auto& t : n.tokens) out.push_back(t.logprob);
  return out;
}

/// Exhaustive evaluation: every candidate at every visited node is scored
/// from scratch and the first maximum is followed.
template <class Normalize>
OracleResult walk(const Tree& t, double lambda_c, double lambda_n, int k, Normalize normalize) {
  OracleResult res;
  std::vector<std::pair<std::string, double>> votes;
  for (const auto& root : t.roots) {
    OraclePath p;
    std::set<std::string> explored;
    std::vector<double> confs;
    const Node* cur = &root;
    while (true) {
      p.texts.push_back(cur->text);
      confs.push_back(oracle::naive_confidence(logprobs_of(*cur)));
      for (const auto& w : oracle::naive_words(cur->text)) explored.insert(w);
      const auto boxed = oracle::naive_boxed(cur->text);
      if (!boxed.empty()) {
        p.answer = boxed;
        p.chain_conf = oracle::naive_chain(confs, k);
        break;
      }
      const Node* best = nullptr;
      double best_reward = 0.0;
      for (const auto& c : cur->children) {
        const double conf = oracle::naive_confidence(logprobs_of(c));
        const double nov = oracle::naive_novelty(oracle::naive_words(c.text), explored);
        const double r = lambda_c * conf + lambda_n * nov;
        if (best == nullptr || r > best_reward) {
          best = &c;
          best_reward = r;
        }
      }
      cur = best;
    }
    votes.emplace_back(normalize(p.answer), p.chain_conf);
    res.paths.push_back(std::move(p));
  }
  res.winner = oracle::naive_vote(votes);
  return res;
}

/// Wraps a backend and records every exchange as a fixture record.
class RecordingBackend final : public gg::GenerationBackend {
 public:
  explicit RecordingBackend(gg::GenerationBackend& inner) : inner_(inner) {}

  gg::Generation generate(const gg::GenerationRequest& request) override {
    auto gen = inner_.generate(request);
    gg::FixtureRecord r;
    r.context = request.context;
    r.seed = request.seed;
    r.mode = request.stop_sequences.empty() ? gg::RequestMode::full : gg::RequestMode::step;
    r.candidates = gen.candidates;
    std::lock_guard lock(mu_);
    records_.push_back(std::move(r));
    return gen;
  }

  gg::BackendHealth health() override { return inner_.health(); }

  gg::ScriptedFixture fixture() const {
    std::lock_guard lock(mu_);
    return gg::ScriptedFixture(records_);
  }

 private:
  gg::GenerationBackend& inner_;
  mutable std::mutex mu_;
  std::vector<gg::FixtureRecord> records_;
};

/// Deterministic generator: candidate content is a pure function of
/// (context, candidate index). Never emits a boxed answer unless asked to.
class ProceduralBackend final : public gg::GenerationBackend {
 public:
  struct Options {
    int min_tokens = 1;
    int max_tokens = 40;
    bool answer_on_finalize = false;
    bool repeat_heavy = false;  // mostly repeated words
  };

  explicit ProceduralBackend(std::uint64_t salt, Options o) : salt_(salt), o_(o) {}

  gg::Generation generate(const gg::GenerationRequest& request) override {
    gg::Generation g;
    const auto h = std::hash<std::string>{}(request.context) ^ (salt_ * 0x9E3779B97F4A7C15ULL);
    for (int i = 0; i < request.n_candidates; ++i) {
      std::mt19937_64 rng(h + static_cast<std::uint64_t>(i) * 7919);
      std::uniform_int_distribution<int> len(o_.min_tokens, o_.max_tokens);
      std::uniform_int_distribution<std::size_t> pick(0, vocabulary().size() - 1);
      std::uniform_real_distribution<double> lp(-3.0, 0.0);
      gg::StepCandidate c;
      const int n = len(rng);  // may exceed max_tokens: the engine must clamp
      for (int t = 0; t < n; ++t) {
        std::string w = o_.repeat_heavy && t > 0 ? c.tokens.front().text : " " + vocabulary()[pick(rng)] +
                                                                             std::to_string(rng() % 50);
        c.tokens.push_back({w, lp(rng)});
        c.text += w;
      }
      const bool finalizing = request.stop_sequences.empty();
      if (finalizing && o_.answer_on_finalize) {
        c.tokens.push_back({" \\boxed{3}", -0.1});
        c.text += " \\boxed{3}";
      }
      c.finish_reason = static_cast<int>(c.tokens.size()) > request.max_tokens ? gg::FinishReason::length
                                                                               : gg::FinishReason::stop_sequence;
      g.candidates.push_back(std::move(c));
    }
    return g;
  }

  gg::BackendHealth health() override { return {true, "procedural", true}; }

 private:
  std::uint64_t salt_;
  Options o_;
};

}  // namespace trees
