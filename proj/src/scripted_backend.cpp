#include "gg/scripted_backend.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "gg/error.hpp"
#include "gg/json_io.hpp"

namespace gg {

using json_io::json;

std::string trim_context(std::string_view s) {
  auto space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && space(s.front())) s.remove_prefix(1);
  while (!s.empty() && space(s.back())) s.remove_suffix(1);
  return std::string(s);
}

namespace {

std::string describe_key(const FixtureRecord& r) {
  std::string key = "context \"" + r.context.substr(0, 60) + (r.context.size() > 60 ? "..." : "") + "\"";
  if (r.seed) key += " seed " + std::to_string(*r.seed);
  if (r.mode) key += *r.mode == RequestMode::full ? " mode full" : " mode step";
  return key;
}

FixtureRecord record_from_json(const json& j) {
  FixtureRecord r;
  r.context = trim_context(json_io::require(j, "context").get<std::string>());
  if (j.contains("seed") && !j.at("seed").is_null()) r.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("mode") && !j.at("mode").is_null()) {
    const auto m = j.at("mode").get<std::string>();
    if (m == "step") {
      r.mode = RequestMode::step;
    } else if (m == "full") {
      r.mode = RequestMode::full;
    } else {
      throw InvalidInput("unknown mode \"" + m + "\"");
    }
  }
  const auto& cands = json_io::require(j, "candidates");
  if (!cands.is_array() || cands.empty()) throw InvalidInput("candidates must be a non-empty array");
  for (const auto& c : cands) r.candidates.push_back(json_io::candidate_from_json(c));
  return r;
}

json record_to_json(const FixtureRecord& r) {
  json j{{"context", r.context}};
  if (r.seed) j["seed"] = *r.seed;
  if (r.mode) j["mode"] = *r.mode == RequestMode::full ? "full" : "step";
  json cands = json::array();
  for (const auto& c : r.candidates) cands.push_back(json_io::candidate_to_json(c));
  j["candidates"] = std::move(cands);
  return j;
}

}  // namespace

ScriptedFixture::ScriptedFixture(std::vector<FixtureRecord> records) : records_(std::move(records)) {
  for (auto& r : records_) r.context = trim_context(r.context);
  index();
}

void ScriptedFixture::index() {
  by_context_.clear();
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.candidates.empty()) throw InvalidInput(describe_key(r) + ": no candidates");
    try {
      validate_candidates(r.candidates);
    } catch (const BackendError& e) {
      throw InvalidInput(describe_key(r) + ": " + e.what());
    }
    auto& slot = by_context_[r.context];
    for (auto other : slot) {
      if (records_[other].seed == r.seed && records_[other].mode == r.mode) {
        throw InvalidInput("duplicate fixture key: " + describe_key(r));
      }
    }
    slot.push_back(i);
  }
}

ScriptedFixture ScriptedFixture::parse(std::istream& in, const std::string& source_name) {
  std::vector<FixtureRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = trim_context(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    try {
      records.push_back(record_from_json(json::parse(trimmed)));
    } catch (const std::exception& e) {
      throw InvalidInput(source_name + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  try {
    return ScriptedFixture(std::move(records));
  } catch (const InvalidInput& e) {
    throw InvalidInput(source_name + ": " + e.what());
  }
}

ScriptedFixture ScriptedFixture::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open fixture file " + path.string());
  return parse(in, path.string());
}

ScriptedFixture ScriptedFixture::load_all(const std::vector<std::filesystem::path>& paths) {
  std::vector<FixtureRecord> all;
  for (const auto& p : paths) {
    auto f = load(p);
    all.insert(all.end(), f.records_.begin(), f.records_.end());
  }
  return ScriptedFixture(std::move(all));
}

void ScriptedFixture::write(std::ostream& out) const {
  for (const auto& r : records_) out << record_to_json(r).dump() << '\n';
}

void ScriptedFixture::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write fixture file " + path.string());
  write(out);
}

const std::vector<StepCandidate>& ScriptedFixture::lookup(std::string_view context,
                                                          std::optional<std::uint64_t> seed,
                                                          RequestMode mode) const {
  const auto key = trim_context(context);
  const auto it = by_context_.find(key);
  if (it != by_context_.end()) {
    const FixtureRecord* best = nullptr;
    int best_rank = -1;
    for (auto idx : it->second) {
      const auto& r = records_[idx];
      if (r.seed && r.seed != seed) continue;
      if (r.mode && *r.mode != mode) continue;
      const int rank = (r.seed ? 2 : 0) + (r.mode ? 1 : 0);
      if (rank > best_rank) {
        best = &r;
        best_rank = rank;
      }
    }
    if (best) return best->candidates;
  }
  std::string prefix = key.substr(0, 80);
  throw BackendError(BackendErrorKind::fixture_miss,
                     "fixture miss for context \"" + prefix + (key.size() > 80 ? "...\"" : "\""));
}

ScriptedBackend::ScriptedBackend(ScriptedFixture fixture, std::string model_id)
    : fixture_(std::move(fixture)), model_id_(std::move(model_id)) {}

Generation ScriptedBackend::generate(const GenerationRequest& request) {
  request.validate();
  calls_.fetch_add(1);
  const auto mode = request.stop_sequences.empty() ? RequestMode::full : RequestMode::step;
  const auto& all = fixture_.lookup(request.context, request.seed, mode);
  Generation out;
  const auto n = std::min<std::size_t>(all.size(), static_cast<std::size_t>(request.n_candidates));
  out.candidates.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
  if (n < static_cast<std::size_t>(request.n_candidates)) {
    out.shortfall = "fixture holds " + std::to_string(all.size()) + " of " +
                    std::to_string(request.n_candidates) + " requested candidates";
  }
  for (auto& c : out.candidates) {
    if (c.tokens.size() > static_cast<std::size_t>(request.max_tokens)) {
      c.tokens.resize(static_cast<std::size_t>(request.max_tokens));
      c.text = join_tokens(c.tokens);
      c.finish_reason = FinishReason::length;
    }
  }
  return out;
}

BackendHealth ScriptedBackend::health() { return {true, model_id_, true}; }

}  // namespace gg
