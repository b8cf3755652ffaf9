#pragma once

/**
 * Benchmark harness: datasets, configuration files, trace files, metrics.
 *
 * All files are line-delimited UTF-8 JSON.
 *
 *   dataset   {"id": "...", "question": "...", "answer": "..."}
 *   trace     header line, one "path" line per subtree, one "result" line
 *   summary   one line per seed plus an aggregate line
 */

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gg/backend.hpp"
#include "gg/grpo.hpp"
#include "gg/metrics.hpp"
#include "gg/search.hpp"

namespace gg {

struct BenchmarkItem {
  std::string id;
  std::string question;
  std::string gold;

  bool operator==(const BenchmarkItem&) const = default;
};

struct BackendSettings {
  std::string url;
  std::string model;
  std::string token;
  double timeout_seconds = 120.0;
  int max_retries = 3;
};

struct HarnessConfig {
  SearchConfig search;
  GrpoConfig grpo;
  BackendSettings backend;
  std::vector<std::uint64_t> seeds{0};
  int question_parallelism = 1;
};

/// Raised when the backend cannot be used at all (CLI exit code 2).
class BackendUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a trace's schema_version has an unknown major.
class TraceSchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace harness {

inline constexpr const char* kTraceSchemaVersion = "1.0";

// Datasets
std::vector<BenchmarkItem> parse_dataset(std::istream& in, const std::string& source_name = "<stream>");
std::vector<BenchmarkItem> load_dataset(const std::filesystem::path& path);
void write_dataset(std::ostream& out, const std::vector<BenchmarkItem>& items);

// Configuration. Keys mirror SearchConfig/GrpoConfig field names; unknown keys are rejected.
nlohmann::json search_config_to_json(const SearchConfig& c);
void apply_search_config_json(const nlohmann::json& j, SearchConfig& c);
HarnessConfig harness_config_from_json(const nlohmann::json& j);
HarnessConfig load_config(const std::filesystem::path& path);

// Traces
struct TraceContext {
  std::string question_id;
  std::string question;
  std::string gold;
  std::uint64_t seed = 0;
};

struct TraceOutcome {
  bool correct = false;
  bool abstained = true;
  std::string error;  // non-empty when the whole search failed
};

/// Serialized trace: deterministic bytes for identical inputs.
std::string render_trace(const TraceContext& ctx, const SearchConfig& config, const SearchResult* result,
                         const TraceOutcome& outcome);

struct TraceFile {
  nlohmann::json header;
  std::vector<nlohmann::json> paths;
  nlohmann::json result;
};

TraceFile parse_trace(std::istream& in, const std::string& source_name = "<stream>");
TraceFile read_trace(const std::filesystem::path& path);

/// Sum of every token array (candidates and finalization completions) in a trace.
std::int64_t trace_token_total(const TraceFile& trace);

// Benchmark
struct SeedReport {
  std::uint64_t seed = 0;
  RunMetrics metrics;
};

struct BenchmarkReport {
  std::vector<SeedReport> seeds;
  double mean_accuracy = 0.0;
  double max_accuracy = 0.0;
  std::vector<std::filesystem::path> trace_files;
};

std::filesystem::path trace_path(const std::filesystem::path& out_dir, std::uint64_t seed, const std::string& id);

/// Runs the configured strategy for every (seed, question); writes traces
/// and summary.jsonl under out_dir. Throws BackendUnavailable when the
/// backend health check fails.
BenchmarkReport run_benchmark(const std::vector<BenchmarkItem>& dataset, const HarnessConfig& config,
                              GenerationBackend& backend, const std::filesystem::path& out_dir);

// Revote
enum class Weighting { confidence, uniform };

Weighting weighting_from_string(std::string_view s);

struct RevoteResult {
  std::filesystem::path trace;
  std::string question_id;
  std::uint64_t seed = 0;
  std::optional<std::string> stored;
  std::optional<std::string> recomputed;
};

RevoteResult revote_trace(const TraceFile& trace, Weighting weighting);
std::vector<RevoteResult> revote(const std::vector<std::filesystem::path>& traces, Weighting weighting);

// GRPO report
CalibrationReport grpo_report(const std::filesystem::path& rollout_file, const GrpoConfig& config);

}  // namespace harness
}  // namespace gg
