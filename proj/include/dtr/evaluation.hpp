#pragma once

#include "dtr/data_model.hpp"
#include "dtr/nuisance.hpp"
#include "dtr/policy.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace dtr {

inline constexpr double kProbabilityFloor = 1e-12;

// ---------------------------------------------------------------------------
// Results and influence-curve inference

struct EvalResult {
  std::string name;
  std::string estimator;  // dr | ipw | or | contrast | conditional
  double estimate = 0.0;
  double variance_of_mean = 0.0;
  std::vector<std::string> ids;
  Eigen::VectorXd ic;
  bool clustered = false;
  bool naive_variance = false;  // IC is not efficient-influence-curve based
  nlohmann::json metadata = nlohmann::json::object();

  std::size_t n() const { return ids.size(); }
  double std_err() const;
  std::pair<double, double> ci95() const;
  double p_value() const;  // two-sided, H0: value = 0
  nlohmann::json to_json() const;
};

// estimate = mean(scores), IC = scores - estimate, variance = sum IC^2 / n^2.
EvalResult make_result(std::string name, std::string estimator, std::vector<std::string> ids,
                       const Eigen::VectorXd& scores);

struct JointResult {
  std::vector<std::string> names;
  Eigen::VectorXd estimates;
  std::vector<std::string> ids;
  Eigen::MatrixXd ic;  // n x p
};

// Results must share the same id set (AlignmentError otherwise); rows follow the first result.
JointResult merge_results(const std::vector<EvalResult>& results);

// Delta method with central finite differences, step 1e-6 * (1 + |theta_j|).
EvalResult contrast(const JointResult& joint, const std::function<double(const Eigen::VectorXd&)>& f,
                    std::string label);
// Exact path for f(x) = w'x.
EvalResult contrast_linear(const JointResult& joint, const Eigen::VectorXd& w, std::string label);

// variance = (1/n^2) sum_c (sum_{i in c} IC_i)^2; cluster labels aligned with result.ids.
EvalResult clustered_variance(const EvalResult& r, const std::vector<std::string>& cluster_of);

// Subgroup values over the levels of a categorical baseline variable:
// theta_v = mean of scores in {V = v}, IC_i = I{V_i = v} / p_v * (Z_i - theta_v).
std::vector<std::pair<std::string, EvalResult>> conditional_value(const EvalResult& r, const PolicyData& pd,
                                                                  const std::string& baseline_var,
                                                                  Diagnostics* diag = nullptr);

// ---------------------------------------------------------------------------
// Doubly robust scores

// Z_k([a, d_{k+1}]) for every stage-k history row and action (NaN off the
// stage action set), and Z_1(d) per subject.
struct ScoreMatrix {
  std::vector<Eigen::MatrixXd> stage_scores;
  Eigen::VectorXd z1;
  bool floor_bound = false;
};

// Direct evaluation of the backward recursion for supplied nuisances. Per stage
// k (1-based index k-1): g and q_full are (stage-k rows) x |action set|; q_full
// holds accumulated rewards plus the residual Q prediction; policy holds the
// stage-k action labels. Absent and degenerate stages contribute g = 1, Q = U.
ScoreMatrix dr_scores(const PolicyData& pd, const std::vector<std::vector<std::string>>& policy,
                      const std::vector<Eigen::MatrixXd>& g, const std::vector<Eigen::MatrixXd>& q_full);

// ---------------------------------------------------------------------------
// Cross-fitting engine

struct EngineOptions {
  bool need_g = true;
  bool need_q = true;
  bool cross_fit_g = true;
};

// Per-fold nuisances and scores, filled stage by stage in backward order:
// fit_stage(K), set_policy(K, ...), fit_stage(K-1), ...
// With one fold every model is trained on all subjects and every subject is
// scored by it.
class CrossFitEngine {
 public:
  CrossFitEngine(const PolicyData& pd, std::vector<ModelSpec> g_specs, std::vector<ModelSpec> q_specs,
                 FoldAssignment folds, EngineOptions options = {}, Diagnostics* diag = nullptr);

  const PolicyData& data() const { return pd_; }
  int stages() const { return K_; }
  int num_folds() const { return folds_.M; }
  const FoldAssignment& folds() const { return folds_; }
  const HistoryTable& history(int k, HistoryKind kind) const;

  // Fits the stage-k Q-models of every fold against the stage k+1 policies
  // already set, then scores the held-out rows of each fold.
  void fit_stage(int k);
  void set_policy(int fold, int k, const std::vector<std::string>& actions);
  void set_policy_all(int k, const std::vector<std::string>& actions);

  // Stage-k scores with each row taken from its own fold (rows x |action set|).
  Eigen::MatrixXd pooled_scores(int k) const;
  // Held-out Z_1(d) per subject.
  Eigen::VectorXd z1() const;
  // Held-out plug-in Q_1(H_1, d_1(H_1)) per subject.
  Eigen::VectorXd plugin_value() const;
  // Held-out inverse-probability-weighted utilities per subject.
  Eigen::VectorXd ipw_terms() const;

  const GFit& g_fit(int fold) const;
  const Eigen::MatrixXd& g(int fold, int k) const;
  const Eigen::MatrixXd& q_full(int fold, int k) const;
  const QModel& q_model(int fold, int k) const;
  const std::vector<std::string>& policy(int fold, int k) const;
  bool floor_bound() const { return floor_bound_; }

  // Throws if any held-out prediction came from a model trained on that subject.
  void verify_cross_fit() const;
  nlohmann::json metadata() const;

 private:
  struct Fold {
    std::vector<std::size_t> train;
    std::vector<char> held_out;  // per subject
    const GFit* gfit = nullptr;
    std::vector<Eigen::MatrixXd> g;       // [k-1]
    std::vector<Eigen::MatrixXd> q_full;  // [k-1]
    std::vector<QModel> q_models;         // [k-1]
    std::vector<Eigen::MatrixXd> scores;  // [k-1], held-out rows only
    std::vector<std::vector<std::string>> d;
    std::vector<std::vector<int>> d_index;
    Eigen::VectorXd z_next;  // per subject, Z_{k+1} under the policies set so far
  };

  Eigen::VectorXd q_target(const Fold& f, int k) const;

  const PolicyData& pd_;
  int K_;
  std::vector<ModelSpec> q_specs_;
  FoldAssignment folds_;
  EngineOptions options_;
  Diagnostics* diag_;
  std::vector<HistoryTable> full_, state_;
  std::vector<std::vector<int>> observed_;       // [k-1][row] observed action index
  std::vector<std::vector<long>> row_of_;        // [k-1][subject] -> row or -1
  Eigen::MatrixXd cum_;                          // n x K accumulated rewards through stage k
  Eigen::VectorXd utility_;
  std::vector<GFit> gfits_;
  std::vector<Fold> fold_;
  int next_stage_;  // stage whose Q-models are fitted next
  bool floor_bound_ = false;
};

// ---------------------------------------------------------------------------
// Value estimators

struct EvalOptions {
  int M = 1;
  std::uint64_t seed = 0;
  bool cross_fit_g = true;
  // Concurrent learner fits in value_of_learner; results do not depend on it.
  int threads = 1;
};

EvalResult value_ipw(const PolicyData& pd, const Policy& policy, const std::vector<ModelSpec>& g_specs,
                     const EvalOptions& opt = {}, Diagnostics* diag = nullptr);
EvalResult value_or(const PolicyData& pd, const Policy& policy, const std::vector<ModelSpec>& q_specs,
                    const EvalOptions& opt = {}, Diagnostics* diag = nullptr);
EvalResult value_dr(const PolicyData& pd, const Policy& policy, const std::vector<ModelSpec>& g_specs,
                    const std::vector<ModelSpec>& q_specs, const EvalOptions& opt = {}, Diagnostics* diag = nullptr);

// Per fold m: learn on the complement, fit nuisances on the complement under
// the learned policy and score fold m.
using PolicyLearner = std::function<Policy(const PolicyData& train, std::uint64_t seed)>;
EvalResult value_of_learner(const PolicyData& pd, const PolicyLearner& learner, const std::string& name,
                            const std::vector<ModelSpec>& g_specs, const std::vector<ModelSpec>& q_specs,
                            const EvalOptions& opt = {}, Diagnostics* diag = nullptr);

}  // namespace dtr
