#include "dtr/evaluation.hpp"

#include "dtr/error.hpp"
#include "dtr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

namespace dtr {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::size_t> all_subjects(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

void attach_warnings(EvalResult& r, const Diagnostics& local, Diagnostics* diag) {
  r.metadata["warnings"] = local.warnings;
  if (diag) {
    for (const auto& w : local.warnings) diag->warn(w);
  }
}

// Rethrows fit failures with the fold that produced them.
template <typename F>
auto in_fold(int fold, int M, F&& f) {
  if (M <= 1) return f();
  try {
    return f();
  } catch (const Error& e) {
    rethrow_with_context(e, "fold " + std::to_string(fold + 1) + " of " + std::to_string(M));
  }
}

}  // namespace

// ---------------------------------------------------------------------------

double EvalResult::std_err() const { return std::sqrt(std::max(variance_of_mean, 0.0)); }

std::pair<double, double> EvalResult::ci95() const {
  const double z = normal_quantile(0.975);
  return {estimate - z * std_err(), estimate + z * std_err()};
}

double EvalResult::p_value() const {
  const double se = std_err();
  if (se == 0.0) return estimate == 0.0 ? 1.0 : 0.0;
  return std::erfc(std::abs(estimate / se) / std::sqrt(2.0));
}

json EvalResult::to_json() const {
  const auto [lo, hi] = ci95();
  return {{"name", name},   {"estimate", estimate},   {"std_err", std_err()}, {"ci95", {lo, hi}},
          {"p_value", p_value()}, {"n", n()}, {"estimator", estimator}, {"clustered", clustered}};
}

EvalResult make_result(std::string name, std::string estimator, std::vector<std::string> ids,
                       const Eigen::VectorXd& scores) {
  if (ids.empty() || static_cast<Eigen::Index>(ids.size()) != scores.size()) {
    throw ValueError("a result needs one score per id and at least one id");
  }
  EvalResult r;
  r.name = std::move(name);
  r.estimator = std::move(estimator);
  r.ids = std::move(ids);
  const double n = static_cast<double>(scores.size());
  r.estimate = scores.mean();
  r.ic = scores.array() - r.estimate;
  r.variance_of_mean = r.ic.squaredNorm() / (n * n);
  return r;
}

JointResult merge_results(const std::vector<EvalResult>& results) {
  if (results.empty()) throw ValueError("nothing to merge");
  JointResult j;
  j.ids = results.front().ids;
  const auto n = static_cast<Eigen::Index>(j.ids.size());
  std::unordered_map<std::string, Eigen::Index> pos;
  for (Eigen::Index i = 0; i < n; ++i) pos.emplace(j.ids[static_cast<std::size_t>(i)], i);
  j.estimates.resize(static_cast<Eigen::Index>(results.size()));
  j.ic.resize(n, static_cast<Eigen::Index>(results.size()));
  for (std::size_t c = 0; c < results.size(); ++c) {
    const auto& r = results[c];
    if (r.ids.size() != j.ids.size()) throw AlignmentError("result '" + r.name + "' has a different number of ids");
    j.names.push_back(r.name);
    j.estimates[static_cast<Eigen::Index>(c)] = r.estimate;
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    for (std::size_t i = 0; i < r.ids.size(); ++i) {
      auto it = pos.find(r.ids[i]);
      if (it == pos.end() || seen[static_cast<std::size_t>(it->second)]) {
        throw AlignmentError("result '" + r.name + "' has id '" + r.ids[i] + "' that does not align");
      }
      seen[static_cast<std::size_t>(it->second)] = 1;
      j.ic(it->second, static_cast<Eigen::Index>(c)) = r.ic[static_cast<Eigen::Index>(i)];
    }
  }
  return j;
}

EvalResult contrast_linear(const JointResult& joint, const Eigen::VectorXd& w, std::string label) {
  if (w.size() != joint.estimates.size()) throw ValueError("contrast weights do not match the merged results");
  EvalResult r;
  r.name = std::move(label);
  r.estimator = "contrast";
  r.ids = joint.ids;
  r.estimate = joint.estimates.dot(w);
  r.ic = joint.ic * w;
  const double n = static_cast<double>(r.ids.size());
  r.variance_of_mean = r.ic.squaredNorm() / (n * n);
  return r;
}

EvalResult contrast(const JointResult& joint, const std::function<double(const Eigen::VectorXd&)>& f,
                    std::string label) {
  const Eigen::Index p = joint.estimates.size();
  Eigen::VectorXd grad(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double h = 1e-6 * (1.0 + std::abs(joint.estimates[j]));
    Eigen::VectorXd up = joint.estimates, down = joint.estimates;
    up[j] += h;
    down[j] -= h;
    grad[j] = (f(up) - f(down)) / (2.0 * h);
  }
  EvalResult r = contrast_linear(joint, grad, std::move(label));
  r.estimate = f(joint.estimates);
  return r;
}

EvalResult clustered_variance(const EvalResult& r, const std::vector<std::string>& cluster_of) {
  if (cluster_of.size() != r.ids.size()) throw AlignmentError("every id needs a cluster");
  std::map<std::string, double> sums;
  for (std::size_t i = 0; i < cluster_of.size(); ++i) sums[cluster_of[i]] += r.ic[static_cast<Eigen::Index>(i)];
  double s = 0.0;
  for (const auto& [c, v] : sums) s += v * v;
  const double n = static_cast<double>(r.ids.size());
  EvalResult out = r;
  out.variance_of_mean = s / (n * n);
  out.clustered = true;
  out.metadata["clusters"] = sums.size();
  if (sums.size() < 2) out.metadata["degenerate_clusters"] = true;
  return out;
}

std::vector<std::pair<std::string, EvalResult>> conditional_value(const EvalResult& r, const PolicyData& pd,
                                                                  const std::string& baseline_var, Diagnostics* diag) {
  const VariableInfo* info = nullptr;
  for (const auto& v : pd.baseline_variables()) {
    if (v.name == baseline_var) info = &v;
  }
  if (!info) throw KeyError("'" + baseline_var + "' is not a baseline variable");
  if (info->kind != ColumnKind::Categorical) throw ConfigError("'" + baseline_var + "' is not categorical");

  std::unordered_map<std::string, std::size_t> subject;
  for (std::size_t s = 0; s < pd.size(); ++s) subject.emplace(pd[s].id, s);
  const auto n = static_cast<Eigen::Index>(r.ids.size());
  std::vector<std::string> level(r.ids.size());
  for (std::size_t i = 0; i < r.ids.size(); ++i) {
    auto it = subject.find(r.ids[i]);
    if (it == subject.end()) throw AlignmentError("id '" + r.ids[i] + "' is not in the data");
    const auto& cell = pd[it->second].baseline.at(baseline_var);
    if (!std::holds_alternative<std::string>(cell)) throw ValueError("missing '" + baseline_var + "' for id " + r.ids[i]);
    level[i] = std::get<std::string>(cell);
  }
  // Scores are recovered from the centered IC of an untransformed result.
  const Eigen::VectorXd z = r.ic.array() + r.estimate;
  std::vector<std::pair<std::string, EvalResult>> out;
  for (const auto& v : info->levels) {
    Eigen::Index count = 0;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (level[static_cast<std::size_t>(i)] == v) {
        ++count;
        sum += z[i];
      }
    }
    if (count == 0) {
      if (diag) diag->warn("level '" + v + "' of '" + baseline_var + "' has no subjects; dropped");
      continue;
    }
    EvalResult c;
    c.name = r.name + "[" + baseline_var + "=" + v + "]";
    c.estimator = "conditional";
    c.ids = r.ids;
    c.estimate = sum / static_cast<double>(count);
    const double p = static_cast<double>(count) / static_cast<double>(n);
    c.ic = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (level[static_cast<std::size_t>(i)] == v) c.ic[i] = (z[i] - c.estimate) / p;
    }
    c.variance_of_mean = c.ic.squaredNorm() / static_cast<double>(n * n);
    c.metadata = r.metadata;
    c.metadata["level"] = v;
    c.metadata["proportion"] = p;
    out.emplace_back(v, std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------

ScoreMatrix dr_scores(const PolicyData& pd, const std::vector<std::vector<std::string>>& policy,
                      const std::vector<Eigen::MatrixXd>& g, const std::vector<Eigen::MatrixXd>& q_full) {
  const int K = pd.max_stages();
  if (static_cast<int>(policy.size()) != K || static_cast<int>(g.size()) != K || static_cast<int>(q_full.size()) != K) {
    throw ValueError("dr_scores needs policy, g and Q for every stage");
  }
  const auto& actions = pd.action_set();
  const auto m = static_cast<Eigen::Index>(actions.size());
  ScoreMatrix out;
  out.stage_scores.resize(static_cast<std::size_t>(K));
  Eigen::VectorXd z(static_cast<Eigen::Index>(pd.size()));
  for (std::size_t i = 0; i < pd.size(); ++i) z[static_cast<Eigen::Index>(i)] = pd[i].utility();
  for (int k = K; k >= 1; --k) {
    const auto ks = static_cast<std::size_t>(k - 1);
    const auto h = get_history(pd, k, HistoryKind::State);
    const auto rows = static_cast<Eigen::Index>(h.rows());
    if (g[ks].rows() != rows || g[ks].cols() != m || q_full[ks].rows() != rows || q_full[ks].cols() != m ||
        policy[ks].size() != h.rows()) {
      throw ValueError("stage " + std::to_string(k) + " nuisance shapes do not match the history rows");
    }
    const auto& stage_actions = pd.stage_action_set(k);
    Eigen::MatrixXd sc = Eigen::MatrixXd::Constant(rows, m, kNaN);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto s = static_cast<Eigen::Index>(h.subjects[static_cast<std::size_t>(r)]);
      const int obs = pd.action_index(h.actions[static_cast<std::size_t>(r)]);
      double gobs = g[ks](r, obs);
      if (!(gobs >= kProbabilityFloor)) {
        gobs = kProbabilityFloor;
        out.floor_bound = true;
      }
      for (const auto& a : stage_actions) {
        const int c = pd.action_index(a);
        const double q = q_full[ks](r, c);
        sc(r, c) = q + (c == obs ? (z[s] - q) / gobs : 0.0);
      }
      const int d = pd.action_index(policy[ks][static_cast<std::size_t>(r)]);
      if (d < 0 || std::isnan(sc(r, d))) {
        throw SchemaError("no Q prediction for action '" + policy[ks][static_cast<std::size_t>(r)] + "' at stage " +
                          std::to_string(k));
      }
      z[s] = sc(r, d);
    }
    out.stage_scores[ks] = std::move(sc);
  }
  out.z1 = z;
  return out;
}

// ---------------------------------------------------------------------------

CrossFitEngine::CrossFitEngine(const PolicyData& pd, std::vector<ModelSpec> g_specs, std::vector<ModelSpec> q_specs,
                               FoldAssignment folds, EngineOptions options, Diagnostics* diag)
    : pd_(pd), K_(pd.max_stages()), folds_(std::move(folds)), options_(options), diag_(diag), next_stage_(K_) {
  const std::size_t n = pd.size();
  if (folds_.ids != pd.ids()) throw AlignmentError("fold assignment ids differ from the data ids");
  if (options_.need_q) q_specs_ = plan_q_specs(q_specs, K_);

  observed_.resize(static_cast<std::size_t>(K_));
  row_of_.assign(static_cast<std::size_t>(K_), std::vector<long>(n, -1));
  for (int k = 1; k <= K_; ++k) {
    const auto ks = static_cast<std::size_t>(k - 1);
    state_.push_back(get_history(pd, k, HistoryKind::State));
    full_.push_back(get_history(pd, k, HistoryKind::Full));
    const auto& h = state_.back();
    for (std::size_t r = 0; r < h.rows(); ++r) {
      row_of_[ks][h.subjects[r]] = static_cast<long>(r);
      observed_[ks].push_back(pd.action_index(h.actions[r]));
    }
  }
  cum_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), K_);
  utility_.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = pd[i];
    double c = 0.0;
    for (int k = 1; k <= K_; ++k) {
      if (k <= t.num_stages()) c += t.stages[static_cast<std::size_t>(k - 1)].reward;
      cum_(static_cast<Eigen::Index>(i), k - 1) = c;
    }
    utility_[static_cast<Eigen::Index>(i)] = t.utility();
  }

  const int M = folds_.M;
  fold_.resize(static_cast<std::size_t>(M));
  for (int l = 0; l < M; ++l) {
    auto& f = fold_[static_cast<std::size_t>(l)];
    f.train = folds_.complement(l);
    f.held_out.assign(n, M == 1 ? 1 : 0);
    if (M > 1) {
      for (auto s : folds_.members(l)) f.held_out[s] = 1;
    }
    f.q_full.resize(static_cast<std::size_t>(K_));
    f.q_models.resize(static_cast<std::size_t>(K_));
    f.scores.resize(static_cast<std::size_t>(K_));
    f.d.resize(static_cast<std::size_t>(K_));
    f.d_index.resize(static_cast<std::size_t>(K_));
    f.z_next = utility_;
  }

  if (options_.need_g) {
    const bool per_fold = options_.cross_fit_g && M > 1;
    if (per_fold) {
      for (int l = 0; l < M; ++l) {
        gfits_.push_back(in_fold(l, M, [&] { return fit_g(pd, g_specs, fold_[static_cast<std::size_t>(l)].train, diag_); }));
      }
    } else {
      gfits_.push_back(fit_g(pd, g_specs, all_subjects(n), diag_));
    }
    std::vector<std::vector<Eigen::MatrixXd>> preds;
    for (const auto& gf : gfits_) {
      std::vector<Eigen::MatrixXd> per_stage;
      for (int k = 1; k <= K_; ++k) per_stage.push_back(predict_g_stage(gf, pd, k, diag_));
      preds.push_back(std::move(per_stage));
    }
    for (int l = 0; l < M; ++l) {
      const std::size_t src = per_fold ? static_cast<std::size_t>(l) : 0;
      fold_[static_cast<std::size_t>(l)].gfit = &gfits_[src];
      fold_[static_cast<std::size_t>(l)].g = preds[src];
    }
  }
}

const HistoryTable& CrossFitEngine::history(int k, HistoryKind kind) const {
  if (k < 1 || k > K_) throw RangeError("stage " + std::to_string(k) + " out of range");
  return kind == HistoryKind::Full ? full_[static_cast<std::size_t>(k - 1)] : state_[static_cast<std::size_t>(k - 1)];
}

Eigen::VectorXd CrossFitEngine::q_target(const Fold& f, int k) const {
  const auto ks = static_cast<std::size_t>(k - 1);
  const auto& h = state_[ks];
  Eigen::VectorXd y(static_cast<Eigen::Index>(h.rows()));
  for (std::size_t r = 0; r < h.rows(); ++r) {
    const std::size_t s = h.subjects[r];
    const auto si = static_cast<Eigen::Index>(s);
    double next = utility_[si];
    if (k < K_) {
      const long r2 = row_of_[ks + 1][s];
      if (r2 >= 0) {
        const int d = f.d_index[ks + 1][static_cast<std::size_t>(r2)];
        next = f.q_full[ks + 1](r2, d);
        if (std::isnan(next)) {
          throw SchemaError("no Q prediction for action '" + pd_.action_set()[static_cast<std::size_t>(d)] +
                            "' at stage " + std::to_string(k + 1));
        }
      }
    }
    y[static_cast<Eigen::Index>(r)] = next - cum_(si, k - 1);
  }
  return y;
}

void CrossFitEngine::fit_stage(int k) {
  if (k != next_stage_) throw ConfigError("stages must be fitted backwards; expected stage " + std::to_string(next_stage_));
  if (k < K_) {
    for (const auto& f : fold_) {
      if (f.d_index[static_cast<std::size_t>(k)].size() != state_[static_cast<std::size_t>(k)].rows()) {
        throw ConfigError("stage " + std::to_string(k + 1) + " policy must be set before fitting stage " + std::to_string(k));
      }
    }
  }
  const auto ks = static_cast<std::size_t>(k - 1);
  const auto& actions = pd_.action_set();
  const auto m = static_cast<Eigen::Index>(actions.size());
  const auto& stage_actions = pd_.stage_action_set(k);
  const auto& hs = state_[ks];
  const auto rows = static_cast<Eigen::Index>(hs.rows());
  const int M = folds_.M;

  for (int l = 0; l < M; ++l) {
    auto& f = fold_[static_cast<std::size_t>(l)];
    if (options_.need_q) {
      const auto& spec = q_specs_[ks];
      const auto& h = history(k, spec.history);
      std::vector<char> in_train(pd_.size(), 0);
      for (auto s : f.train) in_train[s] = 1;
      std::vector<std::size_t> train_rows;
      for (std::size_t r = 0; r < h.rows(); ++r) {
        if (in_train[h.subjects[r]]) train_rows.push_back(r);
      }
      const Eigen::VectorXd y = q_target(f, k);
      Eigen::VectorXd ytrain(static_cast<Eigen::Index>(train_rows.size()));
      for (std::size_t i = 0; i < train_rows.size(); ++i) ytrain[static_cast<Eigen::Index>(i)] = y[static_cast<Eigen::Index>(train_rows[i])];
      f.q_models[ks] = in_fold(l, M, [&] { return QModel::fit(spec, h.subset(train_rows), ytrain, stage_actions); });
      Eigen::MatrixXd q = f.q_models[ks].predict_all(h, actions);
      for (Eigen::Index r = 0; r < rows; ++r) q.row(r).array() += cum_(static_cast<Eigen::Index>(hs.subjects[static_cast<std::size_t>(r)]), k - 1);
      f.q_full[ks] = std::move(q);
    } else {
      f.q_full[ks] = Eigen::MatrixXd::Zero(rows, m);
      for (Eigen::Index r = 0; r < rows; ++r) f.q_full[ks].row(r).setConstant(cum_(static_cast<Eigen::Index>(hs.subjects[static_cast<std::size_t>(r)]), k - 1));
    }
    if (options_.need_g) {
      Eigen::MatrixXd sc = Eigen::MatrixXd::Constant(rows, m, kNaN);
      for (Eigen::Index r = 0; r < rows; ++r) {
        const std::size_t s = hs.subjects[static_cast<std::size_t>(r)];
        if (!f.held_out[s]) continue;
        const int obs = observed_[ks][static_cast<std::size_t>(r)];
        double gobs = f.g[ks](r, obs);
        if (!(gobs >= kProbabilityFloor)) {
          gobs = kProbabilityFloor;
          floor_bound_ = true;
        }
        const double z = f.z_next[static_cast<Eigen::Index>(s)];
        for (const auto& a : stage_actions) {
          const int c = pd_.action_index(a);
          const double q = f.q_full[ks](r, c);
          sc(r, c) = q + (c == obs ? (z - q) / gobs : 0.0);
        }
      }
      f.scores[ks] = std::move(sc);
    }
  }
  next_stage_ = k - 1;
}

void CrossFitEngine::set_policy(int fold, int k, const std::vector<std::string>& actions) {
  if (fold < 0 || fold >= folds_.M) throw RangeError("fold index out of range");
  if (k != next_stage_ + 1) throw ConfigError("stage " + std::to_string(k) + " policy set out of order");
  const auto ks = static_cast<std::size_t>(k - 1);
  const auto& hs = state_[ks];
  if (actions.size() != hs.rows()) throw ValueError("stage " + std::to_string(k) + " policy has the wrong number of rows");
  auto& f = fold_[static_cast<std::size_t>(fold)];
  std::vector<int> idx(actions.size());
  for (std::size_t r = 0; r < actions.size(); ++r) {
    idx[r] = pd_.action_index(actions[r]);
    if (idx[r] < 0) throw DomainError("policy action '" + actions[r] + "' is not in the action set");
  }
  if (options_.need_g) {
    for (std::size_t r = 0; r < hs.rows(); ++r) {
      const std::size_t s = hs.subjects[r];
      if (!f.held_out[s]) continue;
      const double z = f.scores[ks](static_cast<Eigen::Index>(r), idx[r]);
      if (options_.need_q && std::isnan(z)) {
        throw SchemaError("no Q prediction for action '" + actions[r] + "' at stage " + std::to_string(k));
      }
      f.z_next[static_cast<Eigen::Index>(s)] = z;
    }
  }
  f.d[ks] = actions;
  f.d_index[ks] = std::move(idx);
}

void CrossFitEngine::set_policy_all(int k, const std::vector<std::string>& actions) {
  for (int l = 0; l < folds_.M; ++l) set_policy(l, k, actions);
}

Eigen::MatrixXd CrossFitEngine::pooled_scores(int k) const {
  if (!options_.need_g) throw ConfigError("scores need g-models");
  const auto ks = static_cast<std::size_t>(k - 1);
  if (k <= next_stage_) throw ConfigError("stage " + std::to_string(k) + " has not been fitted");
  const auto& hs = state_[ks];
  Eigen::MatrixXd out(static_cast<Eigen::Index>(hs.rows()), static_cast<Eigen::Index>(pd_.action_set().size()));
  for (std::size_t r = 0; r < hs.rows(); ++r) {
    const std::size_t s = hs.subjects[r];
    const int l = folds_.M == 1 ? 0 : folds_.fold_of[s];
    out.row(static_cast<Eigen::Index>(r)) = fold_[static_cast<std::size_t>(l)].scores[ks].row(static_cast<Eigen::Index>(r));
  }
  return out;
}

Eigen::VectorXd CrossFitEngine::z1() const {
  if (next_stage_ != 0 || fold_.front().d_index.front().size() != state_.front().rows()) {
    throw ConfigError("every stage policy must be set before reading Z_1");
  }
  Eigen::VectorXd z(static_cast<Eigen::Index>(pd_.size()));
  for (std::size_t s = 0; s < pd_.size(); ++s) {
    const int l = folds_.M == 1 ? 0 : folds_.fold_of[s];
    z[static_cast<Eigen::Index>(s)] = fold_[static_cast<std::size_t>(l)].z_next[static_cast<Eigen::Index>(s)];
  }
  return z;
}

Eigen::VectorXd CrossFitEngine::plugin_value() const {
  if (next_stage_ != 0 || fold_.front().d_index.front().size() != state_.front().rows()) {
    throw ConfigError("every stage policy must be set before reading the plug-in value");
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(pd_.size()));
  for (std::size_t s = 0; s < pd_.size(); ++s) {
    const int l = folds_.M == 1 ? 0 : folds_.fold_of[s];
    const auto& f = fold_[static_cast<std::size_t>(l)];
    const long r = row_of_[0][s];
    v[static_cast<Eigen::Index>(s)] =
        r < 0 ? utility_[static_cast<Eigen::Index>(s)] : f.q_full[0](r, f.d_index[0][static_cast<std::size_t>(r)]);
  }
  return v;
}

Eigen::VectorXd CrossFitEngine::ipw_terms() const {
  if (!options_.need_g) throw ConfigError("IPW needs g-models");
  Eigen::VectorXd v(static_cast<Eigen::Index>(pd_.size()));
  for (std::size_t s = 0; s < pd_.size(); ++s) {
    const int l = folds_.M == 1 ? 0 : folds_.fold_of[s];
    const auto& f = fold_[static_cast<std::size_t>(l)];
    double w = 1.0;
    for (int k = 1; k <= K_ && w != 0.0; ++k) {
      const auto ks = static_cast<std::size_t>(k - 1);
      const long r = row_of_[ks][s];
      if (r < 0) continue;
      if (f.d_index[ks].size() != state_[ks].rows()) throw ConfigError("stage " + std::to_string(k) + " policy not set");
      const int obs = observed_[ks][static_cast<std::size_t>(r)];
      if (f.d_index[ks][static_cast<std::size_t>(r)] != obs) {
        w = 0.0;
        break;
      }
      w /= std::max(f.g[ks](r, obs), kProbabilityFloor);
    }
    v[static_cast<Eigen::Index>(s)] = w * utility_[static_cast<Eigen::Index>(s)];
  }
  return v;
}

const GFit& CrossFitEngine::g_fit(int fold) const {
  if (!options_.need_g) throw ConfigError("no g-models were fitted");
  return *fold_.at(static_cast<std::size_t>(fold)).gfit;
}

const Eigen::MatrixXd& CrossFitEngine::g(int fold, int k) const {
  if (!options_.need_g) throw ConfigError("no g-models were fitted");
  return fold_.at(static_cast<std::size_t>(fold)).g.at(static_cast<std::size_t>(k - 1));
}

const Eigen::MatrixXd& CrossFitEngine::q_full(int fold, int k) const {
  return fold_.at(static_cast<std::size_t>(fold)).q_full.at(static_cast<std::size_t>(k - 1));
}

const QModel& CrossFitEngine::q_model(int fold, int k) const {
  if (!options_.need_q) throw ConfigError("no Q-models were fitted");
  return fold_.at(static_cast<std::size_t>(fold)).q_models.at(static_cast<std::size_t>(k - 1));
}

const std::vector<std::string>& CrossFitEngine::policy(int fold, int k) const {
  return fold_.at(static_cast<std::size_t>(fold)).d.at(static_cast<std::size_t>(k - 1));
}

void CrossFitEngine::verify_cross_fit() const {
  if (folds_.M == 1) return;
  for (int l = 0; l < folds_.M; ++l) {
    const auto& f = fold_[static_cast<std::size_t>(l)];
    std::set<std::string> held;
    for (auto s : folds_.members(l)) held.insert(pd_[s].id);
    auto check = [&](const std::vector<std::string>& ids, const std::string& what) {
      for (const auto& id : ids) {
        if (held.count(id)) throw Error(ErrorClass::Numerical, "CrossFitError", what + " of fold " + std::to_string(l + 1) + " was trained on held-out id " + id);
      }
    };
    if (options_.need_g && options_.cross_fit_g) {
      for (const auto& m : f.gfit->models) check(m.training_ids(), "g-model");
    }
    if (options_.need_q) {
      for (int k = next_stage_ + 1; k <= K_; ++k) check(f.q_models[static_cast<std::size_t>(k - 1)].training_ids(), "stage " + std::to_string(k) + " Q-model");
    }
  }
}

json CrossFitEngine::metadata() const {
  json j{{"folds", folds_.M}, {"seed", folds_.seed}, {"g_floor_bound", floor_bound_}};
  if (options_.need_g) j["cross_fit_g"] = options_.cross_fit_g;
  if (options_.need_q) {
    json q = json::array();
    for (const auto& s : q_specs_) q.push_back(s.to_json());
    j["q_models"] = q;
  }
  return j;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::vector<std::string>> policy_actions(const Policy& p, const PolicyData& pd) {
  std::vector<std::vector<std::string>> out;
  for (int k = 1; k <= pd.max_stages(); ++k) out.push_back(apply_policy_stage(p, pd, k));
  return out;
}

void run_backward(CrossFitEngine& e, const std::vector<std::vector<std::vector<std::string>>>& per_fold) {
  for (int k = e.stages(); k >= 1; --k) {
    e.fit_stage(k);
    for (int l = 0; l < e.num_folds(); ++l) {
      const auto& acts = per_fold.size() == 1 ? per_fold.front() : per_fold[static_cast<std::size_t>(l)];
      e.set_policy(l, k, acts[static_cast<std::size_t>(k - 1)]);
    }
  }
}

EvalResult finish(const CrossFitEngine& e, const std::string& name, const std::string& estimator,
                  const Eigen::VectorXd& scores, const Diagnostics& local, Diagnostics* diag) {
  EvalResult r = make_result(name, estimator, e.data().ids(), scores);
  r.metadata = e.metadata();
  if (e.floor_bound()) {
    Diagnostics d2 = local;
    d2.warn("g predictions fell below the probability floor");
    attach_warnings(r, d2, diag);
  } else {
    attach_warnings(r, local, diag);
  }
  return r;
}

}  // namespace

EvalResult value_ipw(const PolicyData& pd, const Policy& policy, const std::vector<ModelSpec>& g_specs,
                     const EvalOptions& opt, Diagnostics* diag) {
  Diagnostics local;
  CrossFitEngine e(pd, g_specs, {}, make_folds(pd.ids(), opt.M, opt.seed), {true, false, opt.cross_fit_g}, &local);
  run_backward(e, {policy_actions(policy, pd)});
  auto r = finish(e, policy.name, "ipw", e.ipw_terms(), local, diag);
  r.metadata["alpha"] = policy.realistic ? policy.realistic->alpha : 0.0;
  return r;
}

EvalResult value_or(const PolicyData& pd, const Policy& policy, const std::vector<ModelSpec>& q_specs,
                    const EvalOptions& opt, Diagnostics* diag) {
  Diagnostics local;
  CrossFitEngine e(pd, {}, q_specs, make_folds(pd.ids(), opt.M, opt.seed), {false, true, opt.cross_fit_g}, &local);
  run_backward(e, {policy_actions(policy, pd)});
  auto r = finish(e, policy.name, "or", e.plugin_value(), local, diag);
  r.naive_variance = true;
  r.metadata["naive_variance"] = true;
  return r;
}

EvalResult value_dr(const PolicyData& pd, const Policy& policy, const std::vector<ModelSpec>& g_specs,
                    const std::vector<ModelSpec>& q_specs, const EvalOptions& opt, Diagnostics* diag) {
  Diagnostics local;
  CrossFitEngine e(pd, g_specs, q_specs, make_folds(pd.ids(), opt.M, opt.seed), {true, true, opt.cross_fit_g}, &local);
  run_backward(e, {policy_actions(policy, pd)});
  auto r = finish(e, policy.name, "dr", e.z1(), local, diag);
  r.metadata["alpha"] = policy.realistic ? policy.realistic->alpha : 0.0;
  return r;
}

EvalResult value_of_learner(const PolicyData& pd, const PolicyLearner& learner, const std::string& name,
                            const std::vector<ModelSpec>& g_specs, const std::vector<ModelSpec>& q_specs,
                            const EvalOptions& opt, Diagnostics* diag) {
  Diagnostics local;
  auto folds = make_folds(pd.ids(), opt.M, opt.seed);
  auto fit_fold = [&](int m) {
    return in_fold(m, folds.M, [&] {
      const Policy p = learner(pd.subset(folds.complement(m)), split_seed(opt.seed, static_cast<std::uint64_t>(m)));
      return policy_actions(p, pd);
    });
  };
  std::vector<std::vector<std::vector<std::string>>> per_fold(static_cast<std::size_t>(folds.M));
  const int threads = std::max(1, opt.threads);
  for (int start = 0; start < folds.M; start += threads) {
    const int stop = std::min(folds.M, start + threads);
    std::vector<std::future<std::vector<std::vector<std::string>>>> jobs;
    for (int m = start + 1; m < stop; ++m) jobs.push_back(std::async(std::launch::async, fit_fold, m));
    per_fold[static_cast<std::size_t>(start)] = fit_fold(start);
    for (int m = start + 1; m < stop; ++m) per_fold[static_cast<std::size_t>(m)] = jobs[static_cast<std::size_t>(m - start - 1)].get();
  }
  CrossFitEngine e(pd, g_specs, q_specs, folds, {true, true, opt.cross_fit_g}, &local);
  run_backward(e, per_fold);
  auto r = finish(e, name, "dr", e.z1(), local, diag);
  r.metadata["learned"] = true;
  return r;
}

}  // namespace dtr
