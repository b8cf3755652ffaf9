#include "gg/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "gg/aggregation.hpp"
#include "gg/error.hpp"
#include "gg/json_io.hpp"

namespace gg::harness {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Datasets

std::vector<BenchmarkItem> parse_dataset(std::istream& in, const std::string& source_name) {
  std::vector<BenchmarkItem> items;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = source_name + ":" + std::to_string(line_no) + ": ";
    BenchmarkItem item;
    try {
      const auto j = json::parse(line);
      const auto& id = json_io::require(j, "id");
      item.id = id.is_string() ? id.get<std::string>() : id.dump();
      item.question = json_io::require(j, "question").get<std::string>();
      const auto& ans = json_io::require(j, "answer");
      item.gold = ans.is_string() ? ans.get<std::string>() : ans.dump();
    } catch (const std::exception& e) {
      throw InvalidInput(where + e.what());
    }
    if (item.question.empty()) throw InvalidInput(where + "empty question");
    if (!ids.insert(item.id).second) throw InvalidInput(where + "duplicate id \"" + item.id + "\"");
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<BenchmarkItem> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open dataset " + path.string());
  return parse_dataset(in, path.string());
}

void write_dataset(std::ostream& out, const std::vector<BenchmarkItem>& items) {
  for (const auto& it : items) {
    out << json{{"id", it.id}, {"question", it.question}, {"answer", it.gold}}.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Configuration

json search_config_to_json(const SearchConfig& c) {
  json j{{"strategy", std::string(to_string(c.strategy))},
         {"total_paths", c.total_paths},
         {"beam_width", c.beam_width},
         {"max_depth", c.max_depth},
         {"token_budget", c.token_budget},
         {"finalize_margin", c.finalize_margin},
         {"max_step_tokens", c.max_step_tokens},
         {"lambda_c", c.weights.lambda_c},
         {"lambda_n", c.weights.lambda_n},
         {"chain_k", c.chain_k},
         {"temperature", c.temperature},
         {"top_p", c.top_p},
         {"step_stop_sequences", c.step_stop_sequences},
         {"finalization_string", c.finalization_string},
         {"degeneration",
          {{"window", c.degeneration.window}, {"min_distinct_word_ratio", c.degeneration.min_distinct_word_ratio}}},
         {"parallelism", c.parallelism}};
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  return j;
}

void apply_search_config_json(const json& j, SearchConfig& c) {
  for (const auto& [key, v] : j.items()) {
    if (key == "strategy") {
      c.strategy = strategy_from_string(v.get<std::string>());
    } else if (key == "total_paths") {
      c.total_paths = v.get<int>();
    } else if (key == "beam_width") {
      c.beam_width = v.get<int>();
    } else if (key == "max_depth") {
      c.max_depth = v.get<int>();
    } else if (key == "token_budget") {
      c.token_budget = v.get<int>();
    } else if (key == "finalize_margin") {
      c.finalize_margin = v.get<int>();
    } else if (key == "max_step_tokens") {
      c.max_step_tokens = v.get<int>();
    } else if (key == "lambda_c") {
      c.weights.lambda_c = v.get<double>();
    } else if (key == "lambda_n") {
      c.weights.lambda_n = v.get<double>();
    } else if (key == "chain_k") {
      c.chain_k = v.get<int>();
    } else if (key == "temperature") {
      c.temperature = v.get<double>();
    } else if (key == "top_p") {
      c.top_p = v.get<double>();
    } else if (key == "step_stop_sequences") {
      c.step_stop_sequences = v.get<std::vector<std::string>>();
    } else if (key == "finalization_string") {
      c.finalization_string = v.get<std::string>();
    } else if (key == "degeneration") {
      for (const auto& [dk, dv] : v.items()) {
        if (dk == "window") {
          c.degeneration.window = dv.get<int>();
        } else if (dk == "min_distinct_word_ratio") {
          c.degeneration.min_distinct_word_ratio = dv.get<double>();
        } else {
          throw ConfigError("unknown config key degeneration." + dk);
        }
      }
    } else if (key == "parallelism") {
      c.parallelism = v.get<int>();
    } else if (key == "seed") {
      if (v.is_null()) {
        c.seed.reset();
      } else {
        c.seed = v.get<std::uint64_t>();
      }
    } else {
      throw ConfigError("unknown config key \"" + key + "\"");
    }
  }
}

HarnessConfig harness_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  HarnessConfig hc;
  json search = json::object();
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "seeds") {
        hc.seeds = v.get<std::vector<std::uint64_t>>();
      } else if (key == "question_parallelism") {
        hc.question_parallelism = v.get<int>();
      } else if (key == "grpo") {
        for (const auto& [gk, gv] : v.items()) {
          if (gk == "group_size") {
            hc.grpo.group_size = gv.get<int>();
          } else if (gk == "epsilon") {
            hc.grpo.epsilon = gv.get<double>();
          } else if (gk == "beta") {
            hc.grpo.beta = gv.get<double>();
          } else if (gk == "chain_k") {
            hc.grpo.chain_k = gv.get<int>();
          } else if (gk == "std_floor") {
            hc.grpo.std_floor = gv.get<double>();
          } else {
            throw ConfigError("unknown config key grpo." + gk);
          }
        }
      } else if (key == "backend") {
        for (const auto& [bk, bv] : v.items()) {
          if (bk == "url") {
            hc.backend.url = bv.get<std::string>();
          } else if (bk == "model") {
            hc.backend.model = bv.get<std::string>();
          } else if (bk == "token") {
            hc.backend.token = bv.get<std::string>();
          } else if (bk == "timeout_seconds") {
            hc.backend.timeout_seconds = bv.get<double>();
          } else if (bk == "max_retries") {
            hc.backend.max_retries = bv.get<int>();
          } else {
            throw ConfigError("unknown config key backend." + bk);
          }
        }
      } else {
        search[key] = v;
      }
    }
    apply_search_config_json(search, hc.search);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config type error: ") + e.what());
  }
  if (hc.seeds.empty()) throw ConfigError("seeds must not be empty");
  if (hc.question_parallelism < 1) throw ConfigError("question_parallelism must be positive");
  return hc;
}

HarnessConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return harness_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Traces

namespace {

json score_json(const StepScore& s) {
  return json{{"log_confidence", s.log_confidence},
              {"confidence", s.confidence},
              {"novelty", s.novelty},
              {"reward", s.reward}};
}

json path_json(const PathState& p) {
  json steps = json::array();
  for (const auto& s : p.steps) {
    json cands = json::array();
    for (const auto& c : s.candidates) {
      auto cj = json_io::candidate_to_json(c.candidate);
      cj["scorable"] = c.scorable;
      if (c.scorable) cj["score"] = score_json(c.score);
      cands.push_back(std::move(cj));
    }
    steps.push_back(json{{"selected", s.selected}, {"candidates", std::move(cands)}});
  }
  json fin = nullptr;
  if (p.finalization) {
    fin = json{{"trigger", p.finalization->trigger},
               {"injected", p.finalization->injected},
               {"context", p.finalization->context},
               {"completion", p.finalization->completion ? json_io::candidate_to_json(*p.finalization->completion)
                                                         : json(nullptr)}};
  }
  json j{{"type", "path"},
         {"subtree_id", p.subtree_id},
         {"status", std::string(to_string(p.status))},
         {"failure", p.failure},
         {"token_count", p.token_count},
         {"generated_tokens", p.generated_tokens},
         {"backend_calls", p.backend_calls},
         {"residency", p.residency},
         {"warnings", p.warnings},
         {"steps", std::move(steps)},
         {"finalization", std::move(fin)}};
  j["answer"] = p.answer ? json(*p.answer) : json(nullptr);
  j["canonical"] = p.canonical ? json(*p.canonical) : json(nullptr);
  j["chain_conf"] = p.chain_conf ? json(*p.chain_conf) : json(nullptr);
  return j;
}

}  // namespace

std::string render_trace(const TraceContext& ctx, const SearchConfig& config, const SearchResult* result,
                         const TraceOutcome& outcome) {
  std::ostringstream out;
  const json header{{"type", "header"},
                    {"schema_version", kTraceSchemaVersion},
                    {"question_id", ctx.question_id},
                    {"question", ctx.question},
                    {"gold", ctx.gold},
                    {"seed", ctx.seed},
                    {"strategy", std::string(to_string(config.strategy))},
                    {"config", search_config_to_json(config)}};
  out << header.dump() << '\n';

  json res{{"type", "result"},
           {"weighting", config.strategy == Strategy::best_of_n ? "uniform" : "confidence"},
           {"correct", outcome.correct},
           {"abstained", outcome.abstained},
           {"error", outcome.error}};
  json answers = json::array();
  json tally = json::array();
  json notes = json::array();
  json metrics = nullptr;
  res["final_answer"] = nullptr;
  if (result) {
    for (const auto& p : result->paths) out << path_json(p).dump() << '\n';
    for (const auto& a : result->answers) {
      answers.push_back(json{{"answer", a.answer},
                             {"canonical", a.canonical},
                             {"chain_conf", a.chain_conf},
                             {"weight", a.weight},
                             {"subtree_id", a.subtree_id}});
    }
    for (const auto& [ans, e] : result->tally.entries) {
      tally.push_back(json{{"answer", ans},
                           {"total_weight", e.total_weight},
                           {"supporters", e.supporters},
                           {"max_weight", e.max_weight}});
    }
    for (const auto& n : result->notes) notes.push_back(n);
    if (result->final_answer) res["final_answer"] = *result->final_answer;
    metrics = json{{"total_generated_tokens", result->metrics.total_generated_tokens},
                   {"backend_calls", result->metrics.backend_calls},
                   {"peak_concurrent_context_tokens", result->metrics.peak_concurrent_context_tokens}};
  }
  res["answers"] = std::move(answers);
  res["tally"] = std::move(tally);
  res["notes"] = std::move(notes);
  res["metrics"] = std::move(metrics);
  out << res.dump() << '\n';
  return out.str();
}

TraceFile parse_trace(std::istream& in, const std::string& source_name) {
  TraceFile t;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  bool have_result = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw TraceSchemaError(source_name + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const auto type = j.value("type", std::string());
    if (type == "header") {
      const auto version = j.value("schema_version", std::string());
      const auto major = version.substr(0, version.find('.'));
      const std::string ours(kTraceSchemaVersion);
      if (major != ours.substr(0, ours.find('.'))) {
        throw TraceSchemaError(source_name + ": unsupported trace schema version \"" + version + "\" (reader is " +
                               ours + ")");
      }
      t.header = std::move(j);
      have_header = true;
    } else if (type == "path") {
      t.paths.push_back(std::move(j));
    } else if (type == "result") {
      t.result = std::move(j);
      have_result = true;
    } else {
      throw TraceSchemaError(source_name + ":" + std::to_string(line_no) + ": unknown record type \"" + type + "\"");
    }
  }
  if (!have_header || !have_result) throw TraceSchemaError(source_name + ": missing header or result record");
  return t;
}

TraceFile read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TraceSchemaError("cannot open trace " + path.string());
  return parse_trace(in, path.string());
}

std::int64_t trace_token_total(const TraceFile& trace) {
  std::int64_t total = 0;
  for (const auto& p : trace.paths) {
    for (const auto& s : p.at("steps")) {
      for (const auto& c : s.at("candidates")) total += static_cast<std::int64_t>(c.at("tokens").size());
    }
    const auto& fin = p.at("finalization");
    if (!fin.is_null() && !fin.at("completion").is_null()) {
      total += static_cast<std::int64_t>(fin.at("completion").at("tokens").size());
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// Benchmark

namespace {

std::string sanitize(const std::string& id) {
  std::string out = id;
  for (auto& ch : out) {
    const bool ok = std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.';
    if (!ok) ch = '_';
  }
  return out.empty() ? "_" : out;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << bytes;
}

}  // namespace

std::filesystem::path trace_path(const std::filesystem::path& out_dir, std::uint64_t seed, const std::string& id) {
  return out_dir / ("seed-" + std::to_string(seed)) / (sanitize(id) + ".trace.jsonl");
}

BenchmarkReport run_benchmark(const std::vector<BenchmarkItem>& dataset, const HarnessConfig& config,
                              GenerationBackend& backend, const std::filesystem::path& out_dir) {
  config.search.validate();
  {
    std::set<std::string> names;
    for (const auto& item : dataset) {
      if (!names.insert(sanitize(item.id)).second) {
        throw InvalidInput("question ids collide after file-name sanitizing: " + item.id);
      }
    }
  }
  const auto health = backend.health();
  if (!health.reachable) throw BackendUnavailable("backend unreachable (model " + health.model_id + ")");
  if (!health.supports_logprobs) {
    throw BackendUnavailable("backend model " + health.model_id + " does not return token logprobs");
  }

  BenchmarkReport report;
  std::filesystem::create_directories(out_dir);
  for (auto seed : config.seeds) {
    const auto started = std::chrono::steady_clock::now();
    SearchConfig sc = config.search;
    sc.seed = seed;
    std::filesystem::create_directories(out_dir / ("seed-" + std::to_string(seed)));

    struct Slot {
      RunMetrics metrics;
      bool correct = false;
      std::filesystem::path trace;
    };
    std::vector<Slot> slots(dataset.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < dataset.size(); i = next++) {
        const auto& item = dataset[i];
        TraceContext ctx{item.id, item.question, item.gold, seed};
        TraceOutcome outcome;
        std::optional<SearchResult> result;
        try {
          result = search::run_strategy(item.question, sc, backend);
          result->question_id = item.id;
        } catch (const SearchError& e) {
          outcome.error = e.what();
        }
        auto& slot = slots[i];
        slot.metrics.questions = 1;
        if (result && result->final_answer) {
          outcome.abstained = false;
          outcome.correct = *result->final_answer == aggregation::normalize_answer(item.gold);
        }
        if (result) slot.metrics = result->metrics;
        slot.metrics.abstentions = outcome.abstained ? 1 : 0;
        slot.correct = outcome.correct;
        slot.trace = trace_path(out_dir, seed, item.id);
        write_file(slot.trace, render_trace(ctx, sc, result ? &*result : nullptr, outcome));
      }
    };
    const auto n_workers =
        std::min<std::size_t>(static_cast<std::size_t>(config.question_parallelism), std::max<std::size_t>(1, dataset.size()));
    if (n_workers <= 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    }

    SeedReport sr;
    sr.seed = seed;
    std::int64_t correct = 0;
    for (const auto& s : slots) {
      sr.metrics.questions += 1;
      sr.metrics.abstentions += s.metrics.abstentions;
      sr.metrics.total_generated_tokens += s.metrics.total_generated_tokens;
      sr.metrics.backend_calls += s.metrics.backend_calls;
      sr.metrics.peak_concurrent_context_tokens =
          std::max(sr.metrics.peak_concurrent_context_tokens, s.metrics.peak_concurrent_context_tokens);
      correct += s.correct ? 1 : 0;
      report.trace_files.push_back(s.trace);
    }
    sr.metrics.accuracy =
        sr.metrics.questions > 0 ? static_cast<double>(correct) / static_cast<double>(sr.metrics.questions) : 0.0;
    sr.metrics.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    report.seeds.push_back(sr);
  }

  double sum = 0.0;
  for (const auto& s : report.seeds) {
    sum += s.metrics.accuracy;
    report.max_accuracy = std::max(report.max_accuracy, s.metrics.accuracy);
  }
  report.mean_accuracy = sum / static_cast<double>(report.seeds.size());

  std::ostringstream summary;
  for (const auto& s : report.seeds) {
    const auto& m = s.metrics;
    summary << json{{"type", "seed"},
                    {"seed", s.seed},
                    {"strategy", std::string(to_string(config.search.strategy))},
                    {"accuracy", m.accuracy},
                    {"questions", m.questions},
                    {"abstentions", m.abstentions},
                    {"total_generated_tokens", m.total_generated_tokens},
                    {"backend_calls", m.backend_calls},
                    {"peak_concurrent_context_tokens", m.peak_concurrent_context_tokens},
                    {"wall_time_seconds", m.wall_time_seconds}}
                   .dump()
            << '\n';
  }
  summary << json{{"type", "aggregate"},
                  {"seeds", report.seeds.size()},
                  {"mean_accuracy", report.mean_accuracy},
                  {"max_accuracy", report.max_accuracy}}
                 .dump()
          << '\n';
  write_file(out_dir / "summary.jsonl", summary.str());
  return report;
}

// ---------------------------------------------------------------------------
// Revote

Weighting weighting_from_string(std::string_view s) {
  if (s == "confidence") return Weighting::confidence;
  if (s == "uniform") return Weighting::uniform;
  throw InvalidInput("unknown weighting \"" + std::string(s) + "\"");
}

RevoteResult revote_trace(const TraceFile& trace, Weighting weighting) {
  RevoteResult r;
  try {
    r.question_id = trace.header.at("question_id").get<std::string>();
    r.seed = trace.header.at("seed").get<std::uint64_t>();
    const auto& fa = trace.result.at("final_answer");
    if (!fa.is_null()) r.stored = fa.get<std::string>();
    std::vector<WeightedAnswer> votes;
    for (const auto& a : trace.result.at("answers")) {
      const double w = weighting == Weighting::uniform ? 1.0 : a.at("chain_conf").get<double>();
      votes.push_back({a.at("canonical").get<std::string>(), w});
    }
    if (!votes.empty()) r.recomputed = aggregation::weighted_vote(votes).winner;
  } catch (const nlohmann::json::exception& e) {
    throw TraceSchemaError(std::string("trace is missing vote fields: ") + e.what());
  }
  return r;
}

std::vector<RevoteResult> revote(const std::vector<std::filesystem::path>& traces, Weighting weighting) {
  std::vector<RevoteResult> out;
  out.reserve(traces.size());
  for (const auto& p : traces) {
    auto r = revote_trace(read_trace(p), weighting);
    r.trace = p;
    out.push_back(std::move(r));
  }
  return out;
}

CalibrationReport grpo_report(const std::filesystem::path& rollout_file, const GrpoConfig& config) {
  auto rollouts = grpo::load_rollouts(rollout_file);
  if (rollouts.empty()) throw InvalidInput("rollout file " + rollout_file.string() + " contains no rollouts");
  return grpo::calibration_report(rollouts, config);
}

}  // namespace gg::harness
