#include "gg/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "gg/aggregation.hpp"
#include "gg/error.hpp"
#include "gg/json_io.hpp"

namespace gg {

using nlohmann::json;

void GrpoConfig::validate() const {
  if (group_size < 1) throw ConfigError("group_size must be positive");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (chain_k < 1) throw ConfigError("chain_k must be positive");
  if (!(std_floor > 0.0)) throw ConfigError("std_floor must be > 0");
}

namespace grpo {

double rollout_chain_confidence(const Rollout& rollout, int k) {
  std::vector<double> confs;
  confs.reserve(rollout.steps.size());
  for (const auto& s : rollout.steps) confs.push_back(s.confidence);
  return scoring::chain_confidence_tail(confs, k);
}

double grpo_reward(bool is_correct, double chain_conf) {
  if (!(chain_conf > 0.0 && chain_conf <= 1.0)) {
    throw InvalidInput("grpo_reward: chain confidence must lie in (0,1]");
  }
  const double c4 = chain_conf * chain_conf * chain_conf * chain_conf;
  return is_correct ? 1.0 + c4 : 1.0 - 10.0 * c4;
}

std::vector<double> group_advantages(std::span<const double> rewards, const GrpoConfig& config) {
  if (rewards.size() < 2) throw InvalidInput("group_advantages: need at least 2 rewards");
  const double n = static_cast<double>(rewards.size());
  // Mean via offsets from the minimum; exact for equal rewards.
  const double base = *std::min_element(rewards.begin(), rewards.end());
  double offset = 0.0;
  for (double r : rewards) offset += r - base;
  const double mean = base + offset / n;
  double ss = 0.0;
  for (double r : rewards) ss += (r - mean) * (r - mean);
  const double denom = std::max(std::sqrt(ss / n), config.std_floor);
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back((r - mean) / denom);
  return out;
}

double kl_estimate(double lp_current, double lp_ref) {
  const double d = lp_ref - lp_current;
  return std::exp(d) - d - 1.0;
}

double token_surrogate(std::span<const PolicyLogProbs> tokens, double advantage, const GrpoConfig& config) {
  if (tokens.empty()) throw InvalidInput("token_surrogate: rollout has no tokens");
  double sum = 0.0;
  for (const auto& t : tokens) {
    const double ratio = std::exp(t.current - t.old);
    const double clipped = std::clamp(ratio, 1.0 - config.epsilon, 1.0 + config.epsilon);
    sum += std::min(ratio * advantage, clipped * advantage) - config.beta * kl_estimate(t.current, t.ref);
  }
  return sum / static_cast<double>(tokens.size());
}

double token_surrogate(const Rollout& rollout, double advantage, const GrpoConfig& config) {
  return token_surrogate(rollout.policy_logprobs, advantage, config);
}

double grpo_objective(std::span<const double> deltas) {
  if (deltas.empty()) throw InvalidInput("grpo_objective: empty group");
  return std::accumulate(deltas.begin(), deltas.end(), 0.0) / static_cast<double>(deltas.size());
}

GroupEvaluation evaluate_group(std::span<const Rollout> group, const GrpoConfig& config) {
  GroupEvaluation ev;
  if (!group.empty()) ev.group = group.front().group;
  ev.size_matches_config = static_cast<int>(group.size()) == config.group_size;
  for (const auto& r : group) {
    ev.rewards.push_back(grpo_reward(r.is_correct, rollout_chain_confidence(r, config.chain_k)));
  }
  ev.advantages = group_advantages(ev.rewards, config);
  for (std::size_t i = 0; i < group.size(); ++i) {
    ev.deltas.push_back(token_surrogate(group[i], ev.advantages[i], config));
  }
  ev.objective = grpo_objective(ev.deltas);
  return ev;
}

namespace {

GroupStats stats_for(const std::vector<double>& confs, std::size_t bins) {
  GroupStats s;
  s.count = confs.size();
  s.histogram.assign(bins, 0);
  double sum = 0.0;
  for (double c : confs) {
    sum += c;
    auto bin = static_cast<std::size_t>(c * static_cast<double>(bins));
    s.histogram[std::min(bin, bins - 1)] += 1;
  }
  s.mean_confidence = sum / static_cast<double>(confs.size());
  return s;
}

json stats_json(const std::optional<GroupStats>& s) {
  if (!s) return nullptr;
  return json{{"count", s->count}, {"mean_confidence", s->mean_confidence}, {"histogram", s->histogram}};
}

}  // namespace

CalibrationReport calibration_report(std::span<const Rollout> rollouts, const GrpoConfig& config, std::size_t bins) {
  config.validate();
  if (bins == 0) throw InvalidInput("calibration_report: bins must be positive");
  CalibrationReport rep;
  rep.bins = bins;
  std::vector<double> good;
  std::vector<double> bad;
  for (const auto& r : rollouts) {
    (r.is_correct ? good : bad).push_back(rollout_chain_confidence(r, config.chain_k));
  }
  if (!good.empty()) rep.correct = stats_for(good, bins);
  if (!bad.empty()) rep.incorrect = stats_for(bad, bins);
  if (rep.correct && rep.incorrect) rep.separation = rep.correct->mean_confidence - rep.incorrect->mean_confidence;

  // Groups in first-appearance order; rollouts without a group id form one group.
  std::vector<std::string> order;
  std::map<std::string, std::vector<Rollout>> groups;
  for (const auto& r : rollouts) {
    if (!groups.contains(r.group)) order.push_back(r.group);
    groups[r.group].push_back(r);
  }
  for (const auto& g : order) {
    const auto& members = groups[g];
    if (members.size() < 2) continue;
    const bool has_policy = std::all_of(members.begin(), members.end(),
                                        [](const Rollout& r) { return !r.policy_logprobs.empty(); });
    if (!has_policy) continue;
    rep.groups.push_back(evaluate_group(members, config));
  }
  return rep;
}

json report_to_json(const CalibrationReport& report) {
  json groups = json::array();
  for (const auto& g : report.groups) {
    groups.push_back(json{{"group", g.group},
                          {"rewards", g.rewards},
                          {"advantages", g.advantages},
                          {"deltas", g.deltas},
                          {"objective", g.objective},
                          {"size_matches_config", g.size_matches_config}});
  }
  return json{{"bins", report.bins},
              {"correct", stats_json(report.correct)},
              {"incorrect", stats_json(report.incorrect)},
              {"separation", report.separation ? json(*report.separation) : json(nullptr)},
              {"groups", groups}};
}

std::string report_to_text(const CalibrationReport& report) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  auto section = [&](const char* name, const std::optional<GroupStats>& s) {
    out << name << ": ";
    if (!s) {
      out << "absent\n";
      return;
    }
    out << "n=" << s->count << " mean_confidence=" << s->mean_confidence << "\n  histogram";
    for (std::size_t b = 0; b < s->histogram.size(); ++b) {
      const double width = 1.0 / static_cast<double>(report.bins);
      out << std::setprecision(2) << " [" << static_cast<double>(b) * width << ","
          << static_cast<double>(b + 1) * width << (b + 1 == s->histogram.size() ? "]" : ")") << "="
          << s->histogram[b] << std::setprecision(4);
    }
    out << '\n';
  };
  section("correct", report.correct);
  section("incorrect", report.incorrect);
  out << "separation: ";
  if (report.separation) {
    out << *report.separation << '\n';
  } else {
    out << "absent\n";
  }
  for (const auto& g : report.groups) {
    out << "group " << (g.group.empty() ? "<default>" : g.group) << ": objective=" << g.objective
        << (g.size_matches_config ? "" : " (group size differs from config)") << '\n';
  }
  return out.str();
}

Rollout rollout_from_json(const json& j) {
  Rollout r;
  if (j.contains("id")) r.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
  if (j.contains("group")) {
    r.group = j.at("group").is_string() ? j.at("group").get<std::string>() : j.at("group").dump();
  }
  r.answer = json_io::require(j, "answer").get<std::string>();
  r.gold = json_io::require(j, "gold").get<std::string>();
  r.is_correct = aggregation::normalize_answer(r.answer) == aggregation::normalize_answer(r.gold);
  const auto& steps = json_io::require(j, "steps");
  if (!steps.is_array() || steps.empty()) throw InvalidInput("steps must be a non-empty array");
  for (const auto& s : steps) {
    RolloutStep step;
    if (s.contains("tokens")) {
      step.tokens = json_io::tokens_from_json(s.at("tokens"));
      for (const auto& t : step.tokens) {
        if (t.logprob > 0.0) throw InvalidInput("step token logprob > 0");
      }
      step.confidence = scoring::step_confidence(step.tokens).confidence;
    } else if (s.contains("confidence")) {
      step.confidence = s.at("confidence").get<double>();
      if (!(step.confidence > 0.0 && step.confidence <= 1.0)) {
        throw InvalidInput("step confidence must lie in (0,1]");
      }
    } else {
      throw InvalidInput("step needs \"tokens\" or \"confidence\"");
    }
    r.steps.push_back(std::move(step));
  }
  if (j.contains("policy_logprobs")) {
    for (const auto& t : j.at("policy_logprobs")) {
      if (!t.is_array() || t.size() != 3) throw InvalidInput("policy_logprobs entries must be [current, old, ref]");
      PolicyLogProbs p{t[0].get<double>(), t[1].get<double>(), t[2].get<double>()};
      if (p.current > 0.0 || p.old > 0.0 || p.ref > 0.0) throw InvalidInput("policy logprob > 0");
      r.policy_logprobs.push_back(p);
    }
  }
  return r;
}

json rollout_to_json(const Rollout& r) {
  json steps = json::array();
  for (const auto& s : r.steps) {
    if (!s.tokens.empty()) {
      steps.push_back(json{{"tokens", json_io::tokens_to_json(s.tokens)}});
    } else {
      steps.push_back(json{{"confidence", s.confidence}});
    }
  }
  json policy = json::array();
  for (const auto& p : r.policy_logprobs) policy.push_back(json::array({p.current, p.old, p.ref}));
  json j{{"answer", r.answer}, {"gold", r.gold}, {"steps", steps}, {"policy_logprobs", policy}};
  if (!r.id.empty()) j["id"] = r.id;
  if (!r.group.empty()) j["group"] = r.group;
  return j;
}

std::vector<Rollout> parse_rollouts(std::istream& in, const std::string& source_name) {
  std::vector<Rollout> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(rollout_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw InvalidInput(source_name + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Rollout> load_rollouts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open rollout file " + path.string());
  return parse_rollouts(in, path.string());
}

void write_rollouts(std::ostream& out, std::span<const Rollout> rollouts) {
  for (const auto& r : rollouts) out << rollout_to_json(r).dump() << '\n';
}

}  // namespace grpo
}  // namespace gg
