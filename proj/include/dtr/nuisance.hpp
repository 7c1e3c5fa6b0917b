#pragma once

#include "dtr/data_model.hpp"
#include "dtr/design.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dtr {

// Collected non-fatal conditions (separation, unseen strata, floors binding).
struct Diagnostics {
  std::vector<std::string> warnings;
  void warn(std::string msg);
};

enum class Family { Glm, Ols, Logistic, Multinomial, Empirical };

std::string to_string(Family f);
Family parse_family(const std::string& text);

struct ModelSpec {
  Family family = Family::Glm;
  std::string formula = "~.";
  HistoryKind history = HistoryKind::State;
  bool pooled = false;

  static ModelSpec default_g() { return {Family::Glm, "~.", HistoryKind::State, false}; }
  static ModelSpec default_q() { return {Family::Glm, "~A*.", HistoryKind::State, false}; }

  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
  bool operator==(const ModelSpec&) const = default;
};

// Action-probability model for one stage, or pooled over stages.
class GModel {
 public:
  // classes: the actions the model distributes probability over, in action-set order.
  static GModel fit(const ModelSpec& spec, const HistoryTable& train, const std::vector<std::string>& classes,
                    Diagnostics* diag = nullptr);

  // n x |action_set| probabilities; actions outside the model's classes get 0.
  Eigen::MatrixXd predict(const HistoryTable& h, const std::vector<std::string>& action_set,
                          Diagnostics* diag = nullptr) const;

  Family family() const { return family_; }
  HistoryKind history() const { return history_; }
  bool pooled() const { return pooled_; }
  const std::vector<std::string>& classes() const { return classes_; }
  const Eigen::MatrixXd& coefficients() const { return coef_; }
  const DesignLayout& layout() const { return layout_; }
  bool separation() const { return separation_; }
  // Subject ids of the training rows (cross-fit bookkeeping).
  const std::vector<std::string>& training_ids() const { return training_ids_; }

  nlohmann::json to_json() const;
  static GModel from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> stratum_key(const HistoryTable& h, std::size_t row) const;

  Family family_ = Family::Logistic;  // resolved: Logistic | Multinomial | Empirical, or Glm for a single class
  HistoryKind history_ = HistoryKind::State;
  bool pooled_ = false;
  std::vector<std::string> classes_;
  DesignLayout layout_;
  Eigen::MatrixXd coef_;
  std::vector<std::string> strata_vars_;
  std::map<std::vector<std::string>, std::vector<double>> table_;
  bool separation_ = false;
  std::vector<std::string> training_ids_;
};

// Residual outcome regression for one stage with the synthetic action column.
class QModel {
 public:
  static QModel fit(const ModelSpec& spec, const HistoryTable& train, const Eigen::VectorXd& target,
                    const std::vector<std::string>& action_levels);

  Eigen::VectorXd predict(const HistoryTable& h, const std::string& action) const;
  // n x |action_set|; NaN for actions the model never saw.
  Eigen::MatrixXd predict_all(const HistoryTable& h, const std::vector<std::string>& action_set) const;

  HistoryKind history() const { return history_; }
  const DesignLayout& layout() const { return layout_; }
  const Eigen::VectorXd& coefficients() const { return coef_; }
  const std::vector<std::string>& action_levels() const { return action_levels_; }
  const std::vector<std::string>& training_ids() const { return training_ids_; }

  nlohmann::json to_json() const;
  static QModel from_json(const nlohmann::json& j);

 private:
  HistoryKind history_ = HistoryKind::State;
  DesignLayout layout_;
  Eigen::VectorXd coef_;
  std::vector<std::string> action_levels_;
  std::vector<std::string> training_ids_;
};

struct FoldAssignment {
  std::vector<std::string> ids;  // canonical order
  std::vector<int> fold_of;      // 0-based fold per id
  int M = 1;
  std::uint64_t seed = 0;

  // Subject indices in fold m / outside fold m. With M = 1 the complement is everything.
  std::vector<std::size_t> members(int m) const;
  std::vector<std::size_t> complement(int m) const;
};

// Balanced random partition keyed by id; deterministic in (ids, M, seed).
FoldAssignment make_folds(const std::vector<std::string>& ids, int M, std::uint64_t seed);

// Expands a g-spec list to the stage structure: a single pooled spec, one spec
// replicated over stages, or exactly K specs.
struct GSpecPlan {
  bool pooled = false;
  std::vector<ModelSpec> per_stage;  // size K, or size 1 when pooled
};
GSpecPlan plan_g_specs(const std::vector<ModelSpec>& specs, int K);
std::vector<ModelSpec> plan_q_specs(const std::vector<ModelSpec>& specs, int K);

// g-functions fitted on a training subject set: one pooled model or one per stage.
struct GFit {
  bool pooled = false;
  std::vector<GModel> models;  // size 1 when pooled, else K

  const GModel& stage_model(int k) const { return pooled ? models.front() : models.at(static_cast<std::size_t>(k - 1)); }
  nlohmann::json to_json() const;
  static GFit from_json(const nlohmann::json& j);
};

GFit fit_g(const PolicyData& pd, const std::vector<ModelSpec>& specs, const std::vector<std::size_t>& train,
           Diagnostics* diag = nullptr);

// Stage-k g predictions (over the full action set) for every stage-k history row.
Eigen::MatrixXd predict_g_stage(const GFit& g, const PolicyData& pd, int k, Diagnostics* diag = nullptr);

}  // namespace dtr
