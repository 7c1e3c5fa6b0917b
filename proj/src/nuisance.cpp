#include "dtr/nuisance.hpp"

#include "dtr/error.hpp"
#include "dtr/regression.hpp"
#include "dtr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dtr {

void Diagnostics::warn(std::string msg) {
  if (std::find(warnings.begin(), warnings.end(), msg) == warnings.end()) warnings.push_back(std::move(msg));
}

std::string to_string(Family f) {
  switch (f) {
    case Family::Glm: return "glm";
    case Family::Ols: return "ols";
    case Family::Logistic: return "logistic";
    case Family::Multinomial: return "multinomial";
    case Family::Empirical: return "empirical";
  }
  return "glm";
}

Family parse_family(const std::string& text) {
  for (Family f : {Family::Glm, Family::Ols, Family::Logistic, Family::Multinomial, Family::Empirical}) {
    if (to_string(f) == text) return f;
  }
  throw ConfigError("unknown model family '" + text + "'");
}

nlohmann::json ModelSpec::to_json() const {
  return {{"family", to_string(family)}, {"formula", formula}, {"history", to_string(history)}, {"pooled", pooled}};
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model spec must be an object");
  ModelSpec s;
  try {
    if (j.contains("family")) s.family = parse_family(j.at("family").get<std::string>());
    if (j.contains("formula")) s.formula = j.at("formula").get<std::string>();
    if (j.contains("history")) s.history = parse_history_kind(j.at("history").get<std::string>());
    if (j.contains("pooled")) s.pooled = j.at("pooled").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model spec: ") + e.what());
  }
  parse_formula(s.formula);  // validate early
  return s;
}

// ---------------------------------------------------------------------------
// GModel

namespace {

std::string cell_label(const HistoryColumn& c, std::size_t row) {
  if (c.missing[row]) throw SchemaError("model references '" + c.name + "', which is missing");
  return c.kind == ColumnKind::Numeric ? format_number(c.numeric[row]) : c.labels[row];
}

std::vector<std::string> unique_ids(const HistoryTable& h) {
  std::vector<std::string> ids = h.ids;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

}  // namespace

std::vector<std::string> GModel::stratum_key(const HistoryTable& h, std::size_t row) const {
  std::vector<std::string> key;
  key.reserve(strata_vars_.size());
  for (const auto& v : strata_vars_) key.push_back(cell_label(h.column(v), row));
  return key;
}

GModel GModel::fit(const ModelSpec& spec, const HistoryTable& train, const std::vector<std::string>& classes,
                   Diagnostics* diag) {
  if (classes.empty()) throw FitError("g-model without actions");
  if (train.rows() == 0) throw FitError("g-model training set is empty");
  GModel g;
  g.history_ = spec.history;
  g.pooled_ = !train.stage.has_value();
  g.classes_ = classes;
  g.training_ids_ = unique_ids(train);
  const std::string where = train.stage ? " at stage " + std::to_string(*train.stage) : " (pooled)";

  std::vector<int> y(train.rows());
  for (std::size_t i = 0; i < train.rows(); ++i) {
    auto it = std::find(classes.begin(), classes.end(), train.actions[i]);
    if (it == classes.end()) throw DomainError("action '" + train.actions[i] + "' outside the g-model classes" + where);
    y[i] = static_cast<int>(it - classes.begin());
  }
  const auto dspec = parse_formula(spec.formula);

  if (spec.family == Family::Empirical) {
    g.family_ = Family::Empirical;
    const auto resolved = resolve(dspec, train.names(), false);
    for (const auto& t : resolved.terms) {
      if (t.vars.size() != 1) throw ConfigError("empirical g-models take main-effect terms only: '" + t.label() + "'");
      g.strata_vars_.push_back(t.vars.front());
    }
    std::map<std::vector<std::string>, std::vector<double>> counts;
    for (std::size_t i = 0; i < train.rows(); ++i) {
      auto& c = counts[g.stratum_key(train, i)];
      if (c.empty()) c.assign(classes.size(), 0.0);
      c[static_cast<std::size_t>(y[i])] += 1.0;
    }
    for (auto& [key, c] : counts) {
      const double total = std::accumulate(c.begin(), c.end(), 0.0);
      for (auto& v : c) v /= total;
      g.table_.emplace(key, c);
    }
    return g;
  }

  if (spec.family == Family::Ols) throw ConfigError("ols is not a valid g-model family");
  g.layout_ = DesignLayout::make(dspec, train);
  if (classes.size() == 1) {
    g.family_ = Family::Glm;  // degenerate single-action model
    return g;
  }
  const Eigen::MatrixXd X = g.layout_.build(train);
  if (classes.size() == 2 && spec.family != Family::Multinomial) {
    g.family_ = Family::Logistic;
    Eigen::VectorXd yy(static_cast<Eigen::Index>(y.size()));
    for (std::size_t i = 0; i < y.size(); ++i) yy[static_cast<Eigen::Index>(i)] = y[i];
    const auto fit = fit_logistic(X, yy);
    g.coef_ = fit.coef;
    g.separation_ = fit.separation;
  } else {
    if (spec.family == Family::Logistic) {
      throw ConfigError("logistic g-model needs exactly two actions" + where + "; use multinomial");
    }
    g.family_ = Family::Multinomial;
    GlmFit fit;
    try {
      fit = fit_multinomial(X, y, static_cast<int>(classes.size()));
    } catch (const FitError& e) {
      throw FitError(std::string(e.what()) + where);
    }
    g.coef_ = fit.coef;
    g.separation_ = fit.separation;
  }
  if (g.separation_ && diag) diag->warn("g-model separation" + where);
  return g;
}

Eigen::MatrixXd GModel::predict(const HistoryTable& h, const std::vector<std::string>& action_set,
                                Diagnostics* diag) const {
  const auto n = static_cast<Eigen::Index>(h.rows());
  Eigen::MatrixXd P;
  if (family_ == Family::Empirical) {
    P.resize(n, static_cast<Eigen::Index>(classes_.size()));
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto key = stratum_key(h, static_cast<std::size_t>(i));
      auto it = table_.find(key);
      if (it == table_.end()) {
        if (diag) diag->warn("unseen stratum in empirical g-model; predicting uniform probabilities");
        P.row(i).setConstant(1.0 / static_cast<double>(classes_.size()));
      } else {
        for (std::size_t c = 0; c < classes_.size(); ++c) P(i, static_cast<Eigen::Index>(c)) = it->second[c];
      }
    }
  } else if (classes_.size() == 1) {
    P = Eigen::MatrixXd::Ones(n, 1);
  } else {
    P = multinomial_probabilities(layout_.build(h), coef_);
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(action_set.size()));
  for (std::size_t c = 0; c < classes_.size(); ++c) {
    auto it = std::find(action_set.begin(), action_set.end(), classes_[c]);
    if (it != action_set.end()) out.col(it - action_set.begin()) = P.col(static_cast<Eigen::Index>(c));
  }
  return out;
}

nlohmann::json GModel::to_json() const {
  nlohmann::json j{{"family", to_string(family_)},
                   {"history", to_string(history_)},
                   {"pooled", pooled_},
                   {"classes", classes_}};
  if (family_ == Family::Empirical) {
    j["strata_vars"] = strata_vars_;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [key, p] : table_) rows.push_back({{"stratum", key}, {"p", p}});
    j["table"] = rows;
  } else {
    j["layout"] = layout_.to_json();
    nlohmann::json cols = nlohmann::json::array();
    for (Eigen::Index c = 0; c < coef_.cols(); ++c) {
      cols.push_back(std::vector<double>(coef_.col(c).data(), coef_.col(c).data() + coef_.rows()));
    }
    j["coefficients"] = cols;
  }
  return j;
}

GModel GModel::from_json(const nlohmann::json& j) {
  try {
    GModel g;
    g.family_ = parse_family(j.at("family").get<std::string>());
    g.history_ = parse_history_kind(j.at("history").get<std::string>());
    g.pooled_ = j.at("pooled").get<bool>();
    g.classes_ = j.at("classes").get<std::vector<std::string>>();
    if (g.family_ == Family::Empirical) {
      g.strata_vars_ = j.at("strata_vars").get<std::vector<std::string>>();
      for (const auto& row : j.at("table")) {
        g.table_.emplace(row.at("stratum").get<std::vector<std::string>>(), row.at("p").get<std::vector<double>>());
      }
    } else {
      g.layout_ = DesignLayout::from_json(j.at("layout"));
      const auto& cols = j.at("coefficients");
      g.coef_.resize(static_cast<Eigen::Index>(g.layout_.num_columns()), static_cast<Eigen::Index>(cols.size()));
      for (std::size_t c = 0; c < cols.size(); ++c) {
        const auto v = cols[c].get<std::vector<double>>();
        if (v.size() != g.layout_.num_columns()) throw FormatError("g-model coefficient length mismatch");
        for (std::size_t r = 0; r < v.size(); ++r) g.coef_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[r];
      }
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed g-model: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// QModel

QModel QModel::fit(const ModelSpec& spec, const HistoryTable& train, const Eigen::VectorXd& target,
                   const std::vector<std::string>& action_levels) {
  if (spec.family != Family::Glm && spec.family != Family::Ols) {
    throw ConfigError("Q-models are linear regressions (family 'ols' or 'glm'), got '" + to_string(spec.family) + "'");
  }
  if (spec.pooled) throw UnsupportedError("Q-models are fitted per stage; 'pooled' is not supported");
  const std::string where = train.stage ? " at stage " + std::to_string(*train.stage) : "";
  if (train.rows() == 0) throw FitError("Q-model training set is empty" + where);
  QModel q;
  q.history_ = spec.history;
  q.action_levels_ = action_levels;
  q.training_ids_ = unique_ids(train);
  q.layout_ = DesignLayout::make(parse_formula(spec.formula), train, &q.action_levels_);
  const Eigen::MatrixXd X = q.layout_.build(train, &train.actions);
  try {
    q.coef_ = fit_ols(X, target).coef;
  } catch (const FitError& e) {
    throw FitError(std::string(e.what()) + where);
  }
  return q;
}

Eigen::VectorXd QModel::predict(const HistoryTable& h, const std::string& action) const {
  if (!layout_.uses_action()) return layout_.build(h) * coef_;
  const std::vector<std::string> acts(h.rows(), action);
  return layout_.build(h, &acts) * coef_;
}

Eigen::MatrixXd QModel::predict_all(const HistoryTable& h, const std::vector<std::string>& action_set) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(h.rows()), static_cast<Eigen::Index>(action_set.size()));
  for (std::size_t a = 0; a < action_set.size(); ++a) {
    const bool known = std::find(action_levels_.begin(), action_levels_.end(), action_set[a]) != action_levels_.end();
    if (known) {
      out.col(static_cast<Eigen::Index>(a)) = predict(h, action_set[a]);
    } else {
      out.col(static_cast<Eigen::Index>(a)).setConstant(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return out;
}

nlohmann::json QModel::to_json() const {
  return {{"history", to_string(history_)},
          {"layout", layout_.to_json()},
          {"action_levels", action_levels_},
          {"coefficients", std::vector<double>(coef_.data(), coef_.data() + coef_.size())}};
}

QModel QModel::from_json(const nlohmann::json& j) {
  try {
    QModel q;
    q.history_ = parse_history_kind(j.at("history").get<std::string>());
    q.layout_ = DesignLayout::from_json(j.at("layout"));
    q.action_levels_ = j.at("action_levels").get<std::vector<std::string>>();
    const auto v = j.at("coefficients").get<std::vector<double>>();
    if (v.size() != q.layout_.num_columns()) throw FormatError("Q-model coefficient length mismatch");
    q.coef_ = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    return q;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed Q-model: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Folds

std::vector<std::size_t> FoldAssignment::members(int m) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == m) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::complement(int m) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (M == 1 || fold_of[i] != m) out.push_back(i);
  }
  return out;
}

FoldAssignment make_folds(const std::vector<std::string>& ids, int M, std::uint64_t seed) {
  if (M < 1) throw RangeError("number of folds must be at least 1");
  if (static_cast<std::size_t>(M) > ids.size()) {
    throw RangeError("number of folds " + std::to_string(M) + " exceeds the number of ids " +
                     std::to_string(ids.size()));
  }
  FoldAssignment f;
  f.ids = ids;
  f.M = M;
  f.seed = seed;
  f.fold_of.assign(ids.size(), 0);
  if (M == 1) return f;
  const std::uint64_t key = split_seed(seed, "folds");
  std::vector<std::pair<std::uint64_t, std::size_t>> order;
  order.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) order.emplace_back(split_seed(key, ids[i]), i);
  std::sort(order.begin(), order.end());
  for (std::size_t r = 0; r < order.size(); ++r) f.fold_of[order[r].second] = static_cast<int>(r % M);
  return f;
}

// ---------------------------------------------------------------------------
// Stage plans

GSpecPlan plan_g_specs(const std::vector<ModelSpec>& specs, int K) {
  GSpecPlan plan;
  if (specs.empty()) {
    plan.per_stage.assign(static_cast<std::size_t>(K), ModelSpec::default_g());
    return plan;
  }
  if (specs.size() == 1) {
    if (specs.front().pooled) {
      if (specs.front().history != HistoryKind::State) {
        throw ConfigError("a pooled g-model requires state histories");
      }
      plan.pooled = true;
      plan.per_stage = specs;
      return plan;
    }
    plan.per_stage.assign(static_cast<std::size_t>(K), specs.front());
    return plan;
  }
  if (specs.size() != static_cast<std::size_t>(K)) {
    throw ConfigError("g-model list has " + std::to_string(specs.size()) + " entries, expected 1 or K = " +
                      std::to_string(K));
  }
  for (const auto& s : specs) {
    if (s.pooled) throw ConfigError("per-stage g-model lists cannot contain pooled models");
  }
  plan.per_stage = specs;
  return plan;
}

std::vector<ModelSpec> plan_q_specs(const std::vector<ModelSpec>& specs, int K) {
  if (specs.empty()) return std::vector<ModelSpec>(static_cast<std::size_t>(K), ModelSpec::default_q());
  if (specs.size() == 1) return std::vector<ModelSpec>(static_cast<std::size_t>(K), specs.front());
  if (specs.size() != static_cast<std::size_t>(K)) {
    throw ConfigError("Q-model list has " + std::to_string(specs.size()) + " entries, expected 1 or K = " +
                      std::to_string(K));
  }
  return specs;
}

nlohmann::json GFit::to_json() const {
  nlohmann::json models_j = nlohmann::json::array();
  for (const auto& m : models) models_j.push_back(m.to_json());
  return {{"pooled", pooled}, {"models", models_j}};
}

GFit GFit::from_json(const nlohmann::json& j) {
  try {
    GFit g;
    g.pooled = j.at("pooled").get<bool>();
    for (const auto& m : j.at("models")) g.models.push_back(GModel::from_json(m));
    if (g.models.empty()) throw FormatError("g-model set is empty");
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed g-model set: ") + e.what());
  }
}

namespace {

std::vector<std::size_t> rows_of_subjects(const HistoryTable& h, const std::vector<std::size_t>& subjects,
                                          std::size_t n) {
  std::vector<char> in(n, 0);
  for (std::size_t s : subjects) in[s] = 1;
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < h.rows(); ++r) {
    if (in[h.subjects[r]]) rows.push_back(r);
  }
  return rows;
}

}  // namespace

GFit fit_g(const PolicyData& pd, const std::vector<ModelSpec>& specs, const std::vector<std::size_t>& train,
           Diagnostics* diag) {
  const int K = pd.max_stages();
  const auto plan = plan_g_specs(specs, K);
  GFit out;
  out.pooled = plan.pooled;
  if (plan.pooled) {
    const auto h = get_history(pd, std::nullopt, HistoryKind::State);
    // Pooled classes: every action observed at any stage, in action-set order.
    std::vector<std::string> classes;
    for (const auto& a : pd.action_set()) {
      for (int k = 1; k <= K; ++k) {
        const auto& s = pd.stage_action_set(k);
        if (std::find(s.begin(), s.end(), a) != s.end()) {
          classes.push_back(a);
          break;
        }
      }
    }
    out.models.push_back(GModel::fit(plan.per_stage.front(), h.subset(rows_of_subjects(h, train, pd.size())),
                                     classes, diag));
    return out;
  }
  for (int k = 1; k <= K; ++k) {
    const auto& spec = plan.per_stage[static_cast<std::size_t>(k - 1)];
    const auto h = get_history(pd, k, spec.history);
    out.models.push_back(GModel::fit(spec, h.subset(rows_of_subjects(h, train, pd.size())), pd.stage_action_set(k),
                                     diag));
  }
  return out;
}

Eigen::MatrixXd predict_g_stage(const GFit& g, const PolicyData& pd, int k, Diagnostics* diag) {
  const auto& model = g.stage_model(k);
  return model.predict(get_history(pd, k, model.history()), pd.action_set(), diag);
}

}  // namespace dtr
