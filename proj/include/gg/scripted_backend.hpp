#pragma once

/**
 * Deterministic replay backend.
 *
 * Fixture files are UTF-8, one JSON record per line:
 *
 *   {"context": "<prompt + accepted steps>",
 *    "seed": 3,                 // optional: only used for requests with this seed
 *    "mode": "step" | "full",   // optional: "full" matches requests without stop sequences
 *    "candidates": [{"text": "...", "tokens": [["tok", -0.12], ...],
 *                    "finish_reason": "stop_sequence" | "length" | "end_of_text"}]}
 *
 * `text` defaults to the concatenated token texts. Blank lines and lines
 * starting with '#' are ignored. Lookup is an exact match on the trimmed
 * context; a record with matching seed/mode beats a wildcard record.
 */

#include <atomic>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gg/backend.hpp"

namespace gg {

enum class RequestMode { step, full };

struct FixtureRecord {
  std::string context;
  std::optional<std::uint64_t> seed;
  std::optional<RequestMode> mode;
  std::vector<StepCandidate> candidates;

  bool operator==(const FixtureRecord&) const = default;
};

/// Validated, immutable collection of fixture records.
class ScriptedFixture {
 public:
  ScriptedFixture() = default;
  explicit ScriptedFixture(std::vector<FixtureRecord> records);

  /// Parses line-delimited records; errors name the 1-based line number.
  static ScriptedFixture parse(std::istream& in, const std::string& source_name = "<stream>");
  static ScriptedFixture load(const std::filesystem::path& path);
  /// Merges several files into one fixture (duplicate keys are an error).
  static ScriptedFixture load_all(const std::vector<std::filesystem::path>& paths);

  void write(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;

  const std::vector<FixtureRecord>& records() const { return records_; }

  /// Candidates for (context, seed, mode) in file order; throws
  /// BackendError(fixture_miss) naming the context prefix.
  const std::vector<StepCandidate>& lookup(std::string_view context,
                                           std::optional<std::uint64_t> seed = std::nullopt,
                                           RequestMode mode = RequestMode::step) const;

 private:
  void index();

  std::vector<FixtureRecord> records_;
  std::map<std::string, std::vector<std::size_t>, std::less<>> by_context_;
};

/// Immutable after construction; safe to share across threads.
class ScriptedBackend final : public GenerationBackend {
 public:
  explicit ScriptedBackend(ScriptedFixture fixture, std::string model_id = "scripted");

  Generation generate(const GenerationRequest& request) override;
  BackendHealth health() override;

  std::size_t calls() const { return calls_.load(); }

 private:
  ScriptedFixture fixture_;
  std::string model_id_;
  std::atomic<std::size_t> calls_{0};
};

std::string trim_context(std::string_view context);

}  // namespace gg
