#pragma once

#include "dtr/data_model.hpp"
#include "dtr/evaluation.hpp"
#include "dtr/nuisance.hpp"
#include "dtr/policy.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dtr {

enum class LearnerKind { Ql, Drql, Blip, Ptl, Wcl };

std::string to_string(LearnerKind k);
LearnerKind parse_learner_kind(const std::string& text);

// The policy's own inputs at one stage. For drql and blip the formula is the
// regression design; for trees its variables are the split features
// (categoricals one-hot coded, no intercept).
struct PolicyDesign {
  std::string formula = "~.";
  HistoryKind history = HistoryKind::State;

  nlohmann::json to_json() const;
  static PolicyDesign from_json(const nlohmann::json& j);
};

struct LearnerConfig {
  LearnerKind type = LearnerKind::Drql;
  std::vector<PolicyDesign> designs{PolicyDesign{}};  // one for every stage, or one per stage
  std::vector<ModelSpec> g_specs{ModelSpec::default_g()};
  std::vector<ModelSpec> q_specs{ModelSpec::default_q()};
  int L = 1;
  double alpha = 0.0;
  int depth = 2;
  bool cross_fit_g = true;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static LearnerConfig from_json(const nlohmann::json& j);
};

// Near-zero blips below this magnitude are counted as unstable signs.
inline constexpr double kBlipTolerance = 1e-8;

struct PolicyObject {
  LearnerKind kind = LearnerKind::Drql;
  std::vector<std::string> action_set;
  std::vector<std::vector<std::string>> stage_action_sets;
  std::vector<RulePtr> rules;  // per stage
  double alpha = 0.0;
  std::optional<GFit> g_full;  // g_N, set when alpha > 0
  FoldAssignment folds;
  // Pooled held-out Z_k([a, d_{k+1}]) per stage (rows x action set); empty for ql.
  std::vector<Eigen::MatrixXd> stage_scores;
  nlohmann::json diagnostics = nlohmann::json::object();
};

PolicyObject learn(const PolicyData& pd, const LearnerConfig& cfg, Diagnostics* diag = nullptr);

PolicyObject learn_ql(const PolicyData& pd, const std::vector<ModelSpec>& q_specs, double alpha = 0.0,
                      const std::vector<ModelSpec>& g_specs = {ModelSpec::default_g()}, Diagnostics* diag = nullptr);
PolicyObject learn_drql(const PolicyData& pd, LearnerConfig cfg, Diagnostics* diag = nullptr);
PolicyObject learn_blip(const PolicyData& pd, LearnerConfig cfg, Diagnostics* diag = nullptr);
PolicyObject learn_wcl(const PolicyData& pd, LearnerConfig cfg, Diagnostics* diag = nullptr);
// Exact tree search over the pooled scores at every stage, backwards.
PolicyObject recursive_value_search(const PolicyData& pd, LearnerConfig cfg, Diagnostics* diag = nullptr);

Policy get_policy(const PolicyObject& po);
// Stage rule with the realistic restriction applied, for ad-hoc history rows.
std::function<std::vector<std::string>(const HistoryTable&)> get_policy_functions(const PolicyObject& po, int stage);

// Adapter for value_of_learner; per-fold seeds replace cfg.seed.
PolicyLearner make_learner(const LearnerConfig& cfg);

}  // namespace dtr
