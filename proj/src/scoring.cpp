#include "gg/scoring.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "gg/error.hpp"

namespace gg {

void ScoreWeights::validate() const {
  if (!(lambda_c >= 0.0) || !(lambda_n >= 0.0)) {
    throw ConfigError("score weights must be non-negative");
  }
  if (lambda_c == 0.0 && lambda_n == 0.0) {
    throw ConfigError("lambda_c and lambda_n cannot both be zero");
  }
}

namespace scoring {

namespace {
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
}  // namespace

std::string normalize_word(std::string_view raw) {
  std::size_t begin = 0;
  std::size_t end = raw.size();
  while (begin < end && is_punct(raw[begin])) ++begin;
  while (end > begin && is_punct(raw[end - 1])) --end;
  std::string out(raw.substr(begin, end - begin));
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) {
      auto w = normalize_word(text.substr(start, i - start));
      if (!w.empty()) words.push_back(std::move(w));
    }
  }
  return words;
}

ConfidenceScore step_confidence(std::span<const TokenLogProb> tokens) {
  if (tokens.empty()) {
    throw InvalidInput("step_confidence: empty token list");
  }
  double sum = 0.0;
  for (const auto& t : tokens) sum += t.logprob;
  const double mean = sum / static_cast<double>(tokens.size());
  return {mean, std::exp(mean)};
}

double step_novelty(std::span<const std::string> step_words, const WordSet& explored) {
  if (step_words.empty()) {
    throw InvalidInput("step_novelty: step has no words");
  }
  std::size_t fresh = 0;
  for (const auto& w : step_words) {
    if (!explored.contains(w)) ++fresh;
  }
  return static_cast<double>(fresh) / static_cast<double>(step_words.size());
}

double step_reward(const ConfidenceScore& score, double novelty, const ScoreWeights& weights) {
  return weights.lambda_c * score.confidence + weights.lambda_n * novelty;
}

double chain_confidence(std::span<const double> confidences) {
  if (confidences.empty()) {
    throw InvalidInput("chain_confidence: empty confidence list");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double w = static_cast<double>(i + 1);
    num += w * confidences[i];
    den += w;
  }
  return num / den;
}

double chain_confidence_tail(std::span<const double> confidences, int k) {
  if (k <= 0) throw InvalidInput("chain_confidence: k must be positive");
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), confidences.size());
  return chain_confidence(confidences.subspan(confidences.size() - take));
}

}  // namespace scoring
}  // namespace gg
