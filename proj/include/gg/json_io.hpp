#pragma once

// JSON encodings shared by fixture, trace and rollout files.
// Token arrays are written as [["text", logprob], ...].

#include <nlohmann/json.hpp>

#include "gg/backend.hpp"

namespace gg::json_io {

using nlohmann::json;

json tokens_to_json(const std::vector<TokenLogProb>& tokens);
std::vector<TokenLogProb> tokens_from_json(const json& j);

json candidate_to_json(const StepCandidate& c);
StepCandidate candidate_from_json(const json& j);

/// Reads a required field, throwing InvalidInput naming the field when absent.
const json& require(const json& j, const char* field);

}  // namespace gg::json_io
