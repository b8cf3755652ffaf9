#include "gg/json_io.hpp"

#include "gg/error.hpp"

namespace gg::json_io {

json tokens_to_json(const std::vector<TokenLogProb>& tokens) {
  json arr = json::array();
  for (const auto& t : tokens) arr.push_back(json::array({t.text, t.logprob}));
  return arr;
}

std::vector<TokenLogProb> tokens_from_json(const json& j) {
  if (!j.is_array()) throw InvalidInput("tokens must be an array");
  std::vector<TokenLogProb> out;
  out.reserve(j.size());
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_number()) {
      throw InvalidInput("token entries must be [text, logprob] pairs");
    }
    out.push_back({e[0].get<std::string>(), e[1].get<double>()});
  }
  return out;
}

json candidate_to_json(const StepCandidate& c) {
  return json{{"text", c.text},
              {"tokens", tokens_to_json(c.tokens)},
              {"finish_reason", std::string(to_string(c.finish_reason))}};
}

StepCandidate candidate_from_json(const json& j) {
  if (!j.is_object()) throw InvalidInput("candidate must be an object");
  StepCandidate c;
  c.tokens = tokens_from_json(require(j, "tokens"));
  c.text = j.contains("text") ? j.at("text").get<std::string>() : join_tokens(c.tokens);
  if (j.contains("finish_reason")) {
    c.finish_reason = finish_reason_from_string(j.at("finish_reason").get<std::string>());
  }
  return c;
}

const json& require(const json& j, const char* field) {
  if (!j.is_object() || !j.contains(field)) {
    throw InvalidInput(std::string("missing field \"") + field + "\"");
  }
  return j.at(field);
}

}  // namespace gg::json_io
