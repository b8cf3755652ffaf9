// gg: command-line front end for the test-time search engine.
//
//   gg run --dataset data.jsonl [--config cfg.json] [--strategy gg|bon] ...
//   gg revote --weighting confidence|uniform <trace files or dirs>...
//   gg grpo-report --rollouts rollouts.jsonl [--json]
//   gg validate-fixtures <fixture files>...
//
// Exit codes: 0 success, 1 usage/input error, 2 backend failure.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "gg/error.hpp"
#include "gg/harness.hpp"
#include "gg/http_backend.hpp"
#include "gg/scripted_backend.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kUsageError = 1;
constexpr int kBackendError = 2;

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> seeds;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    if (part.empty()) continue;
    std::size_t used = 0;
    const auto v = std::stoull(part, &used);
    if (used != part.size()) throw gg::ConfigError("bad seed \"" + part + "\"");
    seeds.push_back(v);
  }
  if (seeds.empty()) throw gg::ConfigError("--seeds must list at least one seed");
  return seeds;
}

std::vector<fs::path> expand_traces(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::recursive_directory_iterator(in)) {
        if (e.is_regular_file() && e.path().string().ends_with(".trace.jsonl")) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.emplace_back(in);
    }
  }
  return out;
}

struct RunOptions {
  std::string config;
  std::string dataset;
  std::string strategy;
  int paths = 0;
  int beam = 0;
  std::string seeds;
  std::string out_dir = "gg-out";
  std::string backend_url;
  std::string model;
  std::vector<std::string> fixtures;
  int parallelism = 0;
  int question_parallelism = 0;
};

int cmd_run(const RunOptions& o) {
  // Precedence: built-in defaults < config file < GG_* environment < flags.
  gg::HarnessConfig cfg = o.config.empty() ? gg::HarnessConfig{} : gg::harness::load_config(o.config);
  const auto env = gg::HttpBackendOptions::from_env();
  if (!env.base_url.empty()) cfg.backend.url = env.base_url;
  if (!env.model_id.empty()) cfg.backend.model = env.model_id;
  if (!env.auth_token.empty()) cfg.backend.token = env.auth_token;
  if (!o.strategy.empty()) cfg.search.strategy = gg::strategy_from_string(o.strategy);
  if (o.paths > 0) cfg.search.total_paths = o.paths;
  if (o.beam > 0) cfg.search.beam_width = o.beam;
  if (!o.seeds.empty()) cfg.seeds = parse_seeds(o.seeds);
  if (!o.backend_url.empty()) cfg.backend.url = o.backend_url;
  if (!o.model.empty()) cfg.backend.model = o.model;
  if (o.parallelism > 0) cfg.search.parallelism = o.parallelism;
  if (o.question_parallelism > 0) cfg.question_parallelism = o.question_parallelism;
  cfg.search.validate();

  const auto dataset = gg::harness::load_dataset(o.dataset);

  std::unique_ptr<gg::GenerationBackend> backend;
  if (!o.fixtures.empty()) {
    std::vector<fs::path> files(o.fixtures.begin(), o.fixtures.end());
    backend = std::make_unique<gg::ScriptedBackend>(gg::ScriptedFixture::load_all(files));
  } else {
    gg::HttpBackendOptions http;
    http.base_url = cfg.backend.url;
    http.model_id = cfg.backend.model;
    http.auth_token = cfg.backend.token;
    http.timeout = std::chrono::milliseconds(static_cast<long long>(cfg.backend.timeout_seconds * 1000.0));
    http.max_retries = cfg.backend.max_retries;
    http.pool_size = std::max(cfg.search.parallelism, cfg.question_parallelism);
    backend = std::make_unique<gg::HttpBackend>(http);
  }

  const auto report = gg::harness::run_benchmark(dataset, cfg, *backend, o.out_dir);
  for (const auto& s : report.seeds) {
    const auto& m = s.metrics;
    std::cout << "seed " << s.seed << ": accuracy " << m.accuracy << " (" << m.questions << " questions, "
              << m.abstentions << " abstentions), tokens " << m.total_generated_tokens << ", calls "
              << m.backend_calls << ", peak context tokens " << m.peak_concurrent_context_tokens << ", "
              << m.wall_time_seconds << " s\n";
  }
  std::cout << "accuracy mean " << report.mean_accuracy << " (max " << report.max_accuracy << ")\n"
            << "traces and summary.jsonl written to " << o.out_dir << '\n';
  return 0;
}

int cmd_revote(const std::vector<std::string>& inputs, const std::string& weighting) {
  const auto w = gg::harness::weighting_from_string(weighting);
  const auto results = gg::harness::revote(expand_traces(inputs), w);
  for (const auto& r : results) {
    json line{{"trace", r.trace.string()},
              {"question_id", r.question_id},
              {"seed", r.seed},
              {"stored", r.stored ? json(*r.stored) : json(nullptr)},
              {"recomputed", r.recomputed ? json(*r.recomputed) : json(nullptr)},
              {"matches", r.stored == r.recomputed}};
    std::cout << line.dump() << '\n';
  }
  return 0;
}

int cmd_grpo_report(const std::string& rollouts, const std::string& config, bool as_json, const std::string& out) {
  gg::GrpoConfig grpo = config.empty() ? gg::GrpoConfig{} : gg::harness::load_config(config).grpo;
  const auto report = gg::harness::grpo_report(rollouts, grpo);
  const auto machine = gg::grpo::report_to_json(report).dump(2);
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) throw gg::InvalidInput("cannot write " + out);
    f << machine << '\n';
  }
  std::cout << (as_json ? machine + "\n" : gg::grpo::report_to_text(report));
  return 0;
}

int cmd_validate_fixtures(const std::vector<std::string>& files) {
  int bad = 0;
  for (const auto& f : files) {
    try {
      const auto fx = gg::ScriptedFixture::load(f);
      std::cout << "ok " << f << ": " << fx.records().size() << " records\n";
    } catch (const std::exception& e) {
      std::cerr << "invalid " << e.what() << '\n';
      ++bad;
    }
  }
  return bad == 0 ? 0 : kUsageError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-guided test-time search over token-logprob backends"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "run a benchmark dataset and write traces");
  run_cmd->add_option("--config", run.config, "JSON config file")->check(CLI::ExistingFile);
  run_cmd->add_option("--dataset", run.dataset, "dataset (.jsonl with id/question/answer)")
      ->required()
      ->check(CLI::ExistingFile);
  run_cmd->add_option("--strategy", run.strategy, "gg or bon")->check(CLI::IsMember({"gg", "bon"}));
  run_cmd->add_option("--paths", run.paths, "total paths N")->check(CLI::PositiveNumber);
  run_cmd->add_option("--beam", run.beam, "beam width M")->check(CLI::PositiveNumber);
  run_cmd->add_option("--seeds", run.seeds, "comma-separated seeds, e.g. 0,1,2,3");
  run_cmd->add_option("--out-dir", run.out_dir, "output directory")->capture_default_str();
  run_cmd->add_option("--backend-url", run.backend_url, "OpenAI-compatible base URL");
  run_cmd->add_option("--model", run.model, "model id");
  run_cmd->add_option("--fixtures", run.fixtures, "replay fixture files instead of an HTTP backend")
      ->check(CLI::ExistingFile);
  run_cmd->add_option("--parallelism", run.parallelism, "concurrent subtrees per question")
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("--question-parallelism", run.question_parallelism, "concurrent questions")
      ->check(CLI::PositiveNumber);

  std::vector<std::string> traces;
  std::string weighting = "confidence";
  auto* revote_cmd = app.add_subcommand("revote", "recompute vote winners from stored traces");
  revote_cmd->add_option("traces", traces, "trace files or directories")->required();
  revote_cmd->add_option("--weighting", weighting, "confidence or uniform")
      ->check(CLI::IsMember({"confidence", "uniform"}))
      ->capture_default_str();

  std::string rollouts;
  std::string grpo_config;
  std::string grpo_out;
  bool grpo_json = false;
  auto* grpo_cmd = app.add_subcommand("grpo-report", "calibration report over a rollout file");
  grpo_cmd->add_option("--rollouts", rollouts, "rollout file (.jsonl)")->required()->check(CLI::ExistingFile);
  grpo_cmd->add_option("--config", grpo_config, "JSON config file (grpo section)")->check(CLI::ExistingFile);
  grpo_cmd->add_flag("--json", grpo_json, "print the machine-readable summary instead of text");
  grpo_cmd->add_option("--out", grpo_out, "also write the JSON summary to this file");

  std::vector<std::string> fixture_files;
  auto* validate_cmd = app.add_subcommand("validate-fixtures", "load and validate replay fixture files");
  validate_cmd->add_option("files", fixture_files, "fixture files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*revote_cmd) return cmd_revote(traces, weighting);
    if (*grpo_cmd) return cmd_grpo_report(rollouts, grpo_config, grpo_json, grpo_out);
    if (*validate_cmd) return cmd_validate_fixtures(fixture_files);
  } catch (const gg::BackendUnavailable& e) {
    std::cerr << "backend failure: " << e.what() << '\n';
    return kBackendError;
  } catch (const gg::BackendError& e) {
    std::cerr << "backend failure: " << e.what() << '\n';
    return kBackendError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  }
  return kUsageError;
}
