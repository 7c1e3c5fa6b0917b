#pragma once

#include "dtr/data_model.hpp"
#include "dtr/design.hpp"
#include "dtr/nuisance.hpp"
#include "dtr/tree.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dtr {

// One stage of a policy: maps stage-k history rows to action labels.
class StageRule {
 public:
  virtual ~StageRule() = default;
  virtual std::string kind() const = 0;
  virtual HistoryKind history() const = 0;
  virtual std::vector<std::string> recommend(const HistoryTable& h) const = 0;
  // Rules that rank actions (qv, q) expose per-row values over `actions`; the
  // realistic restriction then takes the argmax over allowed actions.
  virtual std::optional<Eigen::MatrixXd> values(const HistoryTable& /*h*/,
                                                const std::vector<std::string>& /*actions*/) const {
    return std::nullopt;
  }
  virtual nlohmann::json to_json() const = 0;
};

using RulePtr = std::shared_ptr<const StageRule>;

RulePtr static_rule(std::string action);

// I{intercept + sum_j coef_j * x_j > 0} ? action_if_positive : action_else.
RulePtr linear_threshold_rule(std::vector<std::pair<std::string, double>> coefficients, double intercept,
                              std::string action_if_positive, std::string action_else,
                              HistoryKind history = HistoryKind::State);

// Lookup by the labels of `variables` (numbers formatted canonically).
RulePtr table_rule(std::vector<std::string> variables, std::map<std::vector<std::string>, std::string> entries,
                   std::optional<std::string> default_action, HistoryKind history = HistoryKind::State);

RulePtr tree_rule(std::vector<std::string> variables, DesignLayout features, PolicyTree tree,
                  std::vector<std::string> actions, HistoryKind history);

// argmax_a V(h)' coef[:, a]; ties go to the earliest action.
RulePtr qv_rule(std::vector<std::string> actions, DesignLayout layout, Eigen::MatrixXd coefficients,
                HistoryKind history);

// actions[1] if V(h)' coef > 0 else actions[0].
RulePtr blip_rule(std::vector<std::string> actions, DesignLayout layout, Eigen::VectorXd coefficients,
                  HistoryKind history);

// argmax over `actions` of a fitted Q-model.
RulePtr q_rule(std::vector<std::string> actions, QModel model);

// Arbitrary in-process rule; not serializable.
RulePtr callable_rule(std::string description, HistoryKind history,
                      std::function<std::vector<std::string>(const HistoryTable&)> fn);

RulePtr rule_from_json(const nlohmann::json& j);

// B(h) of a blip rule; UnsupportedError for other kinds.
Eigen::VectorXd blip_values(const StageRule& rule, const HistoryTable& h);

struct RealisticSpec {
  double alpha = 0.0;
  GFit g;
  std::vector<std::vector<std::string>> stage_action_sets;  // per stage
};

struct Policy {
  std::string name = "policy";
  std::vector<std::string> action_set;
  std::vector<RulePtr> rules;  // one per stage, or a single rule for every stage
  std::optional<RealisticSpec> realistic;

  const StageRule& rule(int k) const;
  int stages_covered() const;
};

Policy static_policy(const std::string& action, const std::string& name = "");

struct ActionTable {
  std::vector<std::string> ids;
  std::vector<int> stages;
  std::vector<std::string> actions;
};

// Actions for every non-degenerate (id, stage), in canonical order.
ActionTable apply_policy(const Policy& p, const PolicyData& pd);
// Actions for the stage-k history rows.
std::vector<std::string> apply_policy_stage(const Policy& p, const PolicyData& pd, int k);
// Stage-k actions on ad-hoc rows; h_g feeds the realistic g-model (often the same table).
std::vector<std::string> apply_rule_rows(const Policy& p, int k, const HistoryTable& h_rule, const HistoryTable& h_g);

// Allowed actions per row: g(h, a) > alpha, over the stage action set.
struct RealisticActionSet {
  double alpha = 0.0;
  std::vector<std::string> actions;  // the stage action set; columns of `allowed`
  std::vector<std::vector<char>> allowed;
};

// probs: rows x |actions| over the full action set. Raises PositivityError
// naming the (id, stage) of a row with no allowed action.
RealisticActionSet realistic_set(const Eigen::MatrixXd& probs, const std::vector<std::string>& actions,
                                 double alpha, const std::vector<std::string>& stage_actions,
                                 const std::vector<std::string>& ids = {}, const std::vector<int>& stages = {});

// Binary stage action sets only: a disallowed recommendation becomes the other action.
std::vector<std::string> overrule_unrealistic(const std::vector<std::string>& recommended,
                                              const RealisticActionSet& ras);

// Earliest argmax among allowed actions; values has one column per ras.actions entry.
std::vector<std::string> restricted_argmax(const Eigen::MatrixXd& values, const RealisticActionSet& ras);

inline constexpr int kPolicyFormatVersion = 1;

nlohmann::json serialize_policy(const Policy& p);
Policy deserialize_policy(const nlohmann::json& j);

}  // namespace dtr
