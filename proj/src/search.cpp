#include "gg/search.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>

#include "gg/error.hpp"

namespace gg {

std::string_view to_string(Strategy s) {
  return s == Strategy::best_of_n ? "best_of_n" : "self_guided_dvts";
}

Strategy strategy_from_string(std::string_view s) {
  if (s == "self_guided_dvts" || s == "gg") return Strategy::self_guided_dvts;
  if (s == "best_of_n" || s == "bon") return Strategy::best_of_n;
  throw ConfigError("unknown strategy \"" + std::string(s) + "\"");
}

std::string_view to_string(PathStatus s) {
  switch (s) {
    case PathStatus::active: return "active";
    case PathStatus::answered: return "answered";
    case PathStatus::budget_exhausted: return "budget_exhausted";
    case PathStatus::degenerate: return "degenerate";
    case PathStatus::depth_exhausted: return "depth_exhausted";
    case PathStatus::failed: return "failed";
  }
  return "failed";
}

PathStatus path_status_from_string(std::string_view s) {
  for (auto st : {PathStatus::active, PathStatus::answered, PathStatus::budget_exhausted,
                  PathStatus::degenerate, PathStatus::depth_exhausted, PathStatus::failed}) {
    if (to_string(st) == s) return st;
  }
  throw InvalidInput("unknown path status \"" + std::string(s) + "\"");
}

void SearchConfig::validate() const {
  if (total_paths < 1 || beam_width < 1) throw ConfigError("total_paths and beam_width must be positive");
  if (total_paths % beam_width != 0) {
    throw ConfigError("beam_width " + std::to_string(beam_width) + " does not divide total_paths " +
                      std::to_string(total_paths));
  }
  if (max_depth < 1) throw ConfigError("max_depth must be positive");
  if (token_budget < 1) throw ConfigError("token_budget must be positive");
  if (finalize_margin < 1 || finalize_margin >= token_budget) {
    throw ConfigError("finalize_margin must be in [1, token_budget)");
  }
  if (max_step_tokens < 1) throw ConfigError("max_step_tokens must be positive");
  if (chain_k < 1) throw ConfigError("chain_k must be positive");
  if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must be in (0,1]");
  if (degeneration.window < 1) throw ConfigError("degeneration.window must be positive");
  if (!(degeneration.min_distinct_word_ratio >= 0.0 && degeneration.min_distinct_word_ratio <= 1.0)) {
    throw ConfigError("degeneration.min_distinct_word_ratio must be in [0,1]");
  }
  if (parallelism < 1) throw ConfigError("parallelism must be positive");
  weights.validate();
}

namespace search {

namespace {

std::string delimiter(const SearchConfig& config) {
  return config.step_stop_sequences.empty() ? std::string() : config.step_stop_sequences.front();
}

std::int64_t token_total(const std::vector<StepCandidate>& cands) {
  std::int64_t n = 0;
  for (const auto& c : cands) n += static_cast<std::int64_t>(c.tokens.size());
  return n;
}

// Engine-side guard: never account for more tokens than were requested.
void clamp_candidate(StepCandidate& c, int max_tokens) {
  if (c.tokens.size() > static_cast<std::size_t>(max_tokens)) {
    c.tokens.resize(static_cast<std::size_t>(max_tokens));
    c.text = join_tokens(c.tokens);
    c.finish_reason = FinishReason::length;
  }
}

ScoredCandidate score_candidate(StepCandidate c, const WordSet& explored, const ScoreWeights& weights) {
  ScoredCandidate sc{std::move(c), {}, true};
  if (sc.candidate.tokens.empty()) {
    sc.scorable = false;
    return sc;
  }
  const auto conf = scoring::step_confidence(sc.candidate.tokens);
  const auto words = scoring::split_words(sc.candidate.text);
  const double novelty = words.empty() ? 0.0 : scoring::step_novelty(words, explored);
  sc.score = {conf.log_confidence, conf.confidence, novelty, scoring::step_reward(conf, novelty, weights)};
  return sc;
}

std::string normalized_text(std::string_view text) {
  std::string out;
  for (const auto& w : scoring::split_words(text)) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

double path_chain_confidence(const PathState& path, int k) {
  std::vector<double> confs;
  confs.reserve(path.steps.size());
  for (const auto& s : path.steps) confs.push_back(s.score.confidence);
  return scoring::chain_confidence_tail(confs, k);
}

// Records an answer if `text` holds a complete boxed expression.
bool try_answer(PathState& path, std::string_view text, const SearchConfig& config) {
  if (!aggregation::has_boxed_marker(text)) return false;
  auto extracted = aggregation::extract_answer(text);
  if (!extracted) {
    path.warnings.push_back("unbalanced \\boxed expression at depth " + std::to_string(path.depth()));
    return false;
  }
  path.status = PathStatus::answered;
  path.answer = extracted->raw;
  path.canonical = extracted->canonical;
  path.chain_conf = path_chain_confidence(path, config.chain_k);
  return true;
}

void mark_failed(PathState& path, const BackendError& e) {
  path.status = PathStatus::failed;
  path.failure = std::string(to_string(e.kind())) + ": " + e.what();
}

void append_step(PathState& path, std::vector<ScoredCandidate> candidates, int selected) {
  Step step;
  const auto& chosen = candidates[static_cast<std::size_t>(selected)];
  step.text = chosen.candidate.text;
  step.tokens = chosen.candidate.tokens;
  step.score = chosen.score;
  step.finish_reason = chosen.candidate.finish_reason;
  step.selected = selected;
  step.candidates = std::move(candidates);
  path.token_count += static_cast<std::int64_t>(step.tokens.size());
  for (auto& w : scoring::split_words(step.text)) path.explored_words.insert(std::move(w));
  path.steps.push_back(std::move(step));
}

// Termination checks after a selected step has been appended.
void settle(PathState& path, bool degenerate, const SearchConfig& config) {
  if (try_answer(path, path.steps.back().text, config)) return;
  if (degenerate) {
    path.status = PathStatus::degenerate;
    return;
  }
  if (path.depth() >= config.max_depth) path.status = PathStatus::depth_exhausted;
}

// Thread-safe sink for terminal paths; ordered by subtree id at the join.
class ResultCollector {
 public:
  explicit ResultCollector(std::size_t n) : paths_(n) {}

  void submit(PathState path) {
    std::lock_guard lock(mu_);
    const auto id = static_cast<std::size_t>(path.subtree_id);
    paths_.at(id) = std::move(path);
  }

  std::vector<PathState> take() {
    std::lock_guard lock(mu_);
    return std::move(paths_);
  }

 private:
  std::mutex mu_;
  std::vector<PathState> paths_;
};

void finish_result(SearchResult& result, bool unit_weights) {
  std::vector<WeightedAnswer> votes;
  for (const auto& p : result.paths) {
    result.metrics.backend_calls += p.backend_calls;
    result.metrics.total_generated_tokens += p.generated_tokens;
    if (p.status != PathStatus::answered || !p.canonical) continue;
    AnswerRecord rec{*p.answer, *p.canonical, p.chain_conf.value_or(0.0), 0.0, p.subtree_id};
    rec.weight = unit_weights ? 1.0 : rec.chain_conf;
    votes.push_back({rec.canonical, rec.weight});
    result.answers.push_back(std::move(rec));
  }
  result.metrics.questions = 1;
  result.metrics.peak_concurrent_context_tokens = peak_concurrent_tokens(result.paths);
  if (votes.empty()) {
    result.metrics.abstentions = 1;
    return;
  }
  auto outcome = aggregation::weighted_vote(votes);
  result.final_answer = outcome.winner;
  result.tally = std::move(outcome.tally);
}

}  // namespace

std::string build_context(const PathState& path, const SearchConfig& config) {
  const auto delim = delimiter(config);
  std::string ctx = path.question;
  for (const auto& s : path.steps) {
    ctx += delim;
    ctx += s.text;
  }
  return ctx;
}

int step_allowance(const PathState& path, const SearchConfig& config) {
  const std::int64_t m = config.beam_width;
  const std::int64_t by_path = config.token_budget - path.token_count;
  const std::int64_t by_subtree = (m * config.token_budget - path.generated_tokens) / m;
  const std::int64_t allowance = std::min<std::int64_t>({config.max_step_tokens, by_path, by_subtree});
  return static_cast<int>(std::max<std::int64_t>(allowance, 0));
}

std::vector<PathState> init_subtrees(std::string_view question, const SearchConfig& config,
                                     GenerationBackend& backend) {
  config.validate();
  GenerationRequest req;
  req.context = std::string(question);
  req.n_candidates = config.subtree_count();
  req.max_tokens = std::min(config.max_step_tokens, config.token_budget);
  req.temperature = config.temperature;
  req.top_p = config.top_p;
  req.stop_sequences = config.step_stop_sequences;
  req.seed = config.seed;

  Generation gen;
  try {
    gen = backend.generate(req);
  } catch (const BackendError& e) {
    throw SearchError(std::string("search initialization failed: ") + std::string(to_string(e.kind())) + ": " +
                      e.what());
  }
  if (gen.candidates.empty()) throw SearchError("search initialization failed: backend returned no roots");

  std::vector<PathState> paths;
  paths.reserve(gen.candidates.size());
  for (std::size_t i = 0; i < gen.candidates.size(); ++i) {
    auto cand = std::move(gen.candidates[i]);
    clamp_candidate(cand, req.max_tokens);
    strip_stop_suffix(cand, config.step_stop_sequences);

    PathState path;
    path.subtree_id = static_cast<int>(i);
    path.question = std::string(question);
    path.generated_tokens = static_cast<std::int64_t>(cand.tokens.size());
    path.residency.push_back(path.generated_tokens);
    if (!gen.shortfall.empty() && i == 0) path.warnings.push_back("root batch: " + gen.shortfall);

    auto scored = score_candidate(std::move(cand), path.explored_words, config.weights);
    if (!scored.scorable) {
      path.status = PathStatus::degenerate;
      path.warnings.push_back("empty root step");
      paths.push_back(std::move(path));
      continue;
    }
    std::vector<ScoredCandidate> set;
    set.push_back(std::move(scored));
    append_step(path, std::move(set), 0);
    settle(path, false, config);
    paths.push_back(std::move(path));
  }
  return paths;
}

bool detect_degeneration(const PathState& path, std::string_view candidate_text, const DegenerationConfig& config) {
  const auto words = scoring::split_words(candidate_text);
  const auto norm = normalized_text(candidate_text);
  const auto window = static_cast<std::size_t>(std::max(config.window, 0));
  const std::size_t from = path.steps.size() > window ? path.steps.size() - window : 0;
  for (std::size_t i = from; i < path.steps.size(); ++i) {
    if (normalized_text(path.steps[i].text) == norm) return true;
  }
  if (words.empty()) return false;
  const WordSet distinct(words.begin(), words.end());
  const double ratio = static_cast<double>(distinct.size()) / static_cast<double>(words.size());
  return ratio < config.min_distinct_word_ratio;
}

PathState expand_step(PathState path, const SearchConfig& config, GenerationBackend& backend) {
  if (path.status != PathStatus::active) {
    throw InvalidInput("expand_step called on a terminal path (" + std::string(to_string(path.status)) + ")");
  }
  GenerationRequest req;
  req.context = build_context(path, config);
  req.n_candidates = config.beam_width;
  req.max_tokens = step_allowance(path, config);
  req.temperature = config.temperature;
  req.top_p = config.top_p;
  req.stop_sequences = config.step_stop_sequences;
  req.seed = config.seed;
  if (req.max_tokens < 1) {
    throw InvalidInput("expand_step: no token allowance left; finalize instead");
  }

  Generation gen;
  ++path.backend_calls;
  try {
    gen = backend.generate(req);
  } catch (const BackendError& e) {
    mark_failed(path, e);
    return path;
  }
  if (!gen.shortfall.empty()) {
    path.warnings.push_back("depth " + std::to_string(path.depth()) + ": " + gen.shortfall);
  }
  for (auto& c : gen.candidates) {
    clamp_candidate(c, req.max_tokens);
    strip_stop_suffix(c, config.step_stop_sequences);
  }
  const auto generated = token_total(gen.candidates);
  path.generated_tokens += generated;
  path.residency.push_back(path.token_count + generated);

  // Every candidate sees the same explored-word set.
  std::vector<ScoredCandidate> scored;
  scored.reserve(gen.candidates.size());
  for (auto& c : gen.candidates) scored.push_back(score_candidate(std::move(c), path.explored_words, config.weights));

  int best = -1;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    if (!scored[i].scorable) continue;
    if (best < 0 || scored[i].score.reward > scored[static_cast<std::size_t>(best)].score.reward) {
      best = static_cast<int>(i);
    }
  }
  if (best < 0) {
    path.status = PathStatus::degenerate;
    path.warnings.push_back("all candidates empty at depth " + std::to_string(path.depth()));
    return path;
  }
  const bool degenerate =
      detect_degeneration(path, scored[static_cast<std::size_t>(best)].candidate.text, config.degeneration);
  append_step(path, std::move(scored), best);
  settle(path, degenerate, config);
  return path;
}

bool should_finalize(const PathState& path, const SearchConfig& config) {
  return path.token_count > config.token_budget - config.finalize_margin || path.depth() >= config.max_depth - 1 ||
         step_allowance(path, config) < 1;
}

PathState finalize_path(PathState path, const SearchConfig& config, GenerationBackend& backend) {
  if (path.status != PathStatus::active) {
    throw InvalidInput("finalize_path called on a terminal path");
  }
  Finalization fin;
  if (path.token_count > config.token_budget - config.finalize_margin) {
    fin.trigger = "tokens";
  } else if (path.depth() >= config.max_depth - 1) {
    fin.trigger = "depth";
  } else {
    fin.trigger = "allowance";
  }
  fin.injected = config.finalization_string;
  fin.context = build_context(path, config) + delimiter(config) + config.finalization_string;

  GenerationRequest req;
  req.context = fin.context;
  req.n_candidates = 1;
  req.max_tokens = config.finalize_margin;
  req.temperature = config.temperature;
  req.top_p = config.top_p;
  req.seed = config.seed;

  ++path.backend_calls;
  Generation gen;
  try {
    gen = backend.generate(req);
  } catch (const BackendError& e) {
    path.finalization = std::move(fin);
    mark_failed(path, e);
    return path;
  }
  std::int64_t produced = 0;
  if (!gen.candidates.empty()) {
    auto c = std::move(gen.candidates.front());
    clamp_candidate(c, req.max_tokens);
    produced = static_cast<std::int64_t>(c.tokens.size());
    fin.completion = std::move(c);
  }
  path.generated_tokens += produced;
  path.residency.push_back(path.token_count + produced);
  path.token_count += produced;

  const std::string completion_text = fin.completion ? fin.completion->text : std::string();
  path.finalization = std::move(fin);
  if (!try_answer(path, completion_text, config)) {
    path.status = path.finalization->trigger == "depth" ? PathStatus::depth_exhausted : PathStatus::budget_exhausted;
  }
  return path;
}

PathState run_path(PathState path, const SearchConfig& config, GenerationBackend& backend) {
  while (path.status == PathStatus::active) {
    if (should_finalize(path, config)) {
      path = finalize_path(std::move(path), config, backend);
    } else {
      path = expand_step(std::move(path), config, backend);
    }
  }
  return path;
}

SearchResult run_search(std::string_view question, const SearchConfig& config, GenerationBackend& backend) {
  SearchResult result;
  result.strategy = Strategy::self_guided_dvts;
  auto roots = init_subtrees(question, config, backend);
  result.metrics.backend_calls = 1;  // the root batch
  if (static_cast<int>(roots.size()) < config.subtree_count()) {
    result.notes.push_back("backend returned " + std::to_string(roots.size()) + " of " +
                           std::to_string(config.subtree_count()) + " subtree roots");
  }

  ResultCollector collector(roots.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < roots.size(); i = next++) {
      const int id = roots[i].subtree_id;
      try {
        collector.submit(run_path(std::move(roots[i]), config, backend));
      } catch (const std::exception& e) {
        PathState lost;
        lost.subtree_id = id;
        lost.question = std::string(question);
        lost.status = PathStatus::failed;
        lost.failure = std::string("internal: ") + e.what();
        collector.submit(std::move(lost));
      }
    }
  };
  const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(config.parallelism), roots.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  result.paths = collector.take();

  const bool all_failed = std::all_of(result.paths.begin(), result.paths.end(),
                                      [](const PathState& p) { return p.status == PathStatus::failed; });
  if (all_failed) {
    throw SearchError("every subtree failed; first cause: " + result.paths.front().failure);
  }
  finish_result(result, false);
  return result;
}

SearchResult run_best_of_n(std::string_view question, const SearchConfig& config, GenerationBackend& backend) {
  config.validate();
  SearchResult result;
  result.strategy = Strategy::best_of_n;

  GenerationRequest req;
  req.context = std::string(question);
  req.n_candidates = config.total_paths;
  req.max_tokens = config.token_budget;
  req.temperature = config.temperature;
  req.top_p = config.top_p;
  req.seed = config.seed;

  Generation gen;
  try {
    gen = backend.generate(req);
  } catch (const BackendError& e) {
    throw SearchError(std::string("best-of-n generation failed: ") + std::string(to_string(e.kind())) + ": " +
                      e.what());
  }
  if (!gen.shortfall.empty()) result.notes.push_back(gen.shortfall);
  if (gen.candidates.empty()) throw SearchError("best-of-n generation returned no completions");

  for (std::size_t i = 0; i < gen.candidates.size(); ++i) {
    auto cand = std::move(gen.candidates[i]);
    clamp_candidate(cand, req.max_tokens);
    PathState path;
    path.subtree_id = static_cast<int>(i);
    path.question = std::string(question);
    path.generated_tokens = static_cast<std::int64_t>(cand.tokens.size());
    path.residency.push_back(path.generated_tokens);
    path.backend_calls = i == 0 ? 1 : 0;
    auto scored = score_candidate(std::move(cand), path.explored_words, config.weights);
    if (!scored.scorable) {
      path.status = PathStatus::degenerate;
      result.paths.push_back(std::move(path));
      continue;
    }
    std::vector<ScoredCandidate> set;
    set.push_back(std::move(scored));
    append_step(path, std::move(set), 0);
    if (!try_answer(path, path.steps.back().text, config)) path.status = PathStatus::budget_exhausted;
    result.paths.push_back(std::move(path));
  }
  finish_result(result, true);
  return result;
}

SearchResult run_strategy(std::string_view question, const SearchConfig& config, GenerationBackend& backend) {
  return config.strategy == Strategy::best_of_n ? run_best_of_n(question, config, backend)
                                                : run_search(question, config, backend);
}

std::int64_t peak_concurrent_tokens(const std::vector<PathState>& paths) {
  std::size_t rounds = 0;
  for (const auto& p : paths) rounds = std::max(rounds, p.residency.size());
  std::int64_t peak = 0;
  for (std::size_t r = 0; r < rounds; ++r) {
    std::int64_t sum = 0;
    for (const auto& p : paths) {
      if (r < p.residency.size()) sum += p.residency[r];
    }
    peak = std::max(peak, sum);
  }
  return peak;
}

}  // namespace search
}  // namespace gg
