#pragma once

/**
 * Confidence-calibration reward and GRPO surrogate math over recorded rollouts.
 *
 * reward      = 1 + C^4 when correct, 1 - 10 C^4 otherwise (C = chain confidence)
 * advantage   = (r - mean) / max(pop. std, std_floor) within a group
 * surrogate   = mean over tokens of min(rho A, clip(rho, 1-eps, 1+eps) A) - beta kl,
 *               rho = exp(lp_current - lp_old),
 *               kl  = exp(lp_ref - lp_current) - (lp_ref - lp_current) - 1
 * objective   = mean surrogate over the group
 *
 * No gradients or parameter updates happen here.
 */

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gg/scoring.hpp"

namespace gg {

struct PolicyLogProbs {
  double current = 0.0;
  double old = 0.0;
  double ref = 0.0;
};

struct RolloutStep {
  std::vector<TokenLogProb> tokens;  // may be empty when only a confidence was recorded
  double confidence = 1.0;
};

struct Rollout {
  std::string id;
  std::string group;
  std::vector<RolloutStep> steps;
  std::string answer;
  std::string gold;
  bool is_correct = false;  // normalize(answer) == normalize(gold)
  std::vector<PolicyLogProbs> policy_logprobs;
};

struct GrpoConfig {
  int group_size = 8;
  double epsilon = 0.2;
  double beta = 0.04;
  int chain_k = 5;
  double std_floor = 1e-6;

  void validate() const;
};

struct GroupStats {
  std::size_t count = 0;
  double mean_confidence = 0.0;
  std::vector<std::size_t> histogram;
};

struct GroupEvaluation {
  std::string group;
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::vector<double> deltas;
  double objective = 0.0;
  bool size_matches_config = true;
};

struct CalibrationReport {
  std::size_t bins = 10;
  std::optional<GroupStats> correct;
  std::optional<GroupStats> incorrect;
  std::optional<double> separation;  // mean(correct) - mean(incorrect)
  std::vector<GroupEvaluation> groups;
};

namespace grpo {

double rollout_chain_confidence(const Rollout& rollout, int k);

/// Throws InvalidInput when chain_conf is outside (0,1].
double grpo_reward(bool is_correct, double chain_conf);

/// Throws InvalidInput for fewer than 2 rewards.
std::vector<double> group_advantages(std::span<const double> rewards, const GrpoConfig& config);

double kl_estimate(double lp_current, double lp_ref);

double token_surrogate(std::span<const PolicyLogProbs> tokens, double advantage, const GrpoConfig& config);
double token_surrogate(const Rollout& rollout, double advantage, const GrpoConfig& config);

double grpo_objective(std::span<const double> deltas);

/// Rewards, advantages, surrogates and objective for one group of rollouts.
GroupEvaluation evaluate_group(std::span<const Rollout> group, const GrpoConfig& config);

CalibrationReport calibration_report(std::span<const Rollout> rollouts, const GrpoConfig& config,
                                     std::size_t bins = 10);

nlohmann::json report_to_json(const CalibrationReport& report);
std::string report_to_text(const CalibrationReport& report);

// Rollout files: one JSON object per line with fields
//   id?, group?, answer, gold,
//   steps: [{"tokens": [[text, logprob], ...]} | {"confidence": c}],
//   policy_logprobs: [[current, old, ref], ...]
Rollout rollout_from_json(const nlohmann::json& j);
nlohmann::json rollout_to_json(const Rollout& r);
std::vector<Rollout> parse_rollouts(std::istream& in, const std::string& source_name = "<stream>");
std::vector<Rollout> load_rollouts(const std::filesystem::path& path);
void write_rollouts(std::ostream& out, std::span<const Rollout> rollouts);

}  // namespace grpo
}  // namespace gg
