#include "dtr/policy.hpp"

#include "dtr/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dtr {

namespace {

using nlohmann::json;

std::vector<std::string> argmax_labels(const Eigen::MatrixXd& values, const std::vector<std::string>& actions) {
  std::vector<std::string> out(static_cast<std::size_t>(values.rows()));
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    Eigen::Index best = -1;
    for (Eigen::Index a = 0; a < values.cols(); ++a) {
      if (std::isnan(values(i, a))) continue;
      if (best < 0 || values(i, a) > values(i, best)) best = a;
    }
    if (best < 0) throw ValueError("no finite action value to maximize");
    out[static_cast<std::size_t>(i)] = actions[static_cast<std::size_t>(best)];
  }
  return out;
}

class StaticRule final : public StageRule {
 public:
  explicit StaticRule(std::string a) : action_(std::move(a)) {}
  std::string kind() const override { return "static"; }
  HistoryKind history() const override { return HistoryKind::State; }
  std::vector<std::string> recommend(const HistoryTable& h) const override {
    return std::vector<std::string>(h.rows(), action_);
  }
  json to_json() const override { return {{"kind", "static"}, {"action", action_}}; }

 private:
  std::string action_;
};

class LinearThresholdRule final : public StageRule {
 public:
  LinearThresholdRule(std::vector<std::pair<std::string, double>> coef, double intercept, std::string pos,
                      std::string neg, HistoryKind kind)
      : coef_(std::move(coef)), intercept_(intercept), pos_(std::move(pos)), neg_(std::move(neg)), kind_(kind) {}
  std::string kind() const override { return "linear_threshold"; }
  HistoryKind history() const override { return kind_; }
  std::vector<std::string> recommend(const HistoryTable& h) const override {
    std::vector<double> score(h.rows(), intercept_);
    for (const auto& [name, c] : coef_) {
      const auto& col = h.column(name);
      if (col.kind != ColumnKind::Numeric) throw SchemaError("linear threshold variable '" + name + "' is not numeric");
      if (col.any_missing()) throw SchemaError("linear threshold variable '" + name + "' has missing values");
      for (std::size_t i = 0; i < h.rows(); ++i) score[i] += c * col.numeric[i];
    }
    std::vector<std::string> out(h.rows());
    for (std::size_t i = 0; i < h.rows(); ++i) out[i] = score[i] > 0 ? pos_ : neg_;
    return out;
  }
  json to_json() const override {
    json coefs = json::object();
    for (const auto& [name, c] : coef_) coefs[name] = c;
    return {{"kind", "linear_threshold"}, {"history", to_string(kind_)}, {"coefficients", coefs},
            {"intercept", intercept_},    {"action_if_positive", pos_},  {"action_else", neg_}};
  }

 private:
  std::vector<std::pair<std::string, double>> coef_;
  double intercept_;
  std::string pos_, neg_;
  HistoryKind kind_;
};

class TableRule final : public StageRule {
 public:
  TableRule(std::vector<std::string> vars, std::map<std::vector<std::string>, std::string> entries,
            std::optional<std::string> def, HistoryKind kind)
      : vars_(std::move(vars)), entries_(std::move(entries)), default_(std::move(def)), kind_(kind) {}
  std::string kind() const override { return "table"; }
  HistoryKind history() const override { return kind_; }
  std::vector<std::string> recommend(const HistoryTable& h) const override {
    std::vector<const HistoryColumn*> cols;
    for (const auto& v : vars_) cols.push_back(&h.column(v));
    std::vector<std::string> out(h.rows());
    for (std::size_t i = 0; i < h.rows(); ++i) {
      std::vector<std::string> key;
      for (const auto* c : cols) {
        if (c->missing[i]) throw SchemaError("table rule variable '" + c->name + "' is missing");
        key.push_back(c->kind == ColumnKind::Numeric ? format_number(c->numeric[i]) : c->labels[i]);
      }
      auto it = entries_.find(key);
      if (it != entries_.end()) {
        out[i] = it->second;
      } else if (default_) {
        out[i] = *default_;
      } else {
        throw DomainError("table rule has no entry for stratum of id " + h.ids[i]);
      }
    }
    return out;
  }
  json to_json() const override {
    json entries = json::array();
    for (const auto& [key, a] : entries_) entries.push_back({{"key", key}, {"action", a}});
    json j{{"kind", "table"}, {"history", to_string(kind_)}, {"variables", vars_}, {"entries", entries}};
    if (default_) j["default"] = *default_;
    return j;
  }

 private:
  std::vector<std::string> vars_;
  std::map<std::vector<std::string>, std::string> entries_;
  std::optional<std::string> default_;
  HistoryKind kind_;
};

class TreeRule final : public StageRule {
 public:
  TreeRule(std::vector<std::string> vars, DesignLayout layout, PolicyTree tree, std::vector<std::string> actions,
           HistoryKind kind)
      : vars_(std::move(vars)), layout_(std::move(layout)), tree_(std::move(tree)), actions_(std::move(actions)),
        kind_(kind) {}
  std::string kind() const override { return "tree"; }
  HistoryKind history() const override { return kind_; }
  std::vector<std::string> recommend(const HistoryTable& h) const override {
    const auto idx = predict_tree(tree_, layout_.build(h));
    std::vector<std::string> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = actions_[static_cast<std::size_t>(idx[i])];
    return out;
  }
  json to_json() const override {
    return {{"kind", "tree"},
            {"history", to_string(kind_)},
            {"variables", vars_},
            {"actions", actions_},
            {"layout", layout_.to_json()},
            {"feature_names", layout_.column_names()},
            {"tree", tree_to_json(tree_, actions_)}};
  }

 private:
  std::vector<std::string> vars_;
  DesignLayout layout_;
  PolicyTree tree_;
  std::vector<std::string> actions_;
  HistoryKind kind_;
};

json matrix_columns(const Eigen::MatrixXd& m) {
  json cols = json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    cols.push_back(std::vector<double>(m.col(c).data(), m.col(c).data() + m.rows()));
  }
  return cols;
}

class QVRule final : public StageRule {
 public:
  QVRule(std::vector<std::string> actions, DesignLayout layout, Eigen::MatrixXd coef, HistoryKind kind)
      : actions_(std::move(actions)), layout_(std::move(layout)), coef_(std::move(coef)), kind_(kind) {
    if (coef_.cols() != static_cast<Eigen::Index>(actions_.size()) ||
        coef_.rows() != static_cast<Eigen::Index>(layout_.num_columns())) {
      throw FormatError("qv rule coefficient shape mismatch");
    }
  }
  std::string kind() const override { return "qv"; }
  HistoryKind history() const override { return kind_; }
  std::vector<std::string> recommend(const HistoryTable& h) const override {
    return argmax_labels(layout_.build(h) * coef_, actions_);
  }
  std::optional<Eigen::MatrixXd> values(const HistoryTable& h, const std::vector<std::string>& actions) const override {
    const Eigen::MatrixXd v = layout_.build(h) * coef_;
    Eigen::MatrixXd out(v.rows(), static_cast<Eigen::Index>(actions.size()));
    for (std::size_t a = 0; a < actions.size(); ++a) {
      auto it = std::find(actions_.begin(), actions_.end(), actions[a]);
      if (it == actions_.end()) {
        out.col(static_cast<Eigen::Index>(a)).setConstant(std::nan(""));
      } else {
        out.col(static_cast<Eigen::Index>(a)) = v.col(it - actions_.begin());
      }
    }
    return out;
  }
  json to_json() const override {
    return {{"kind", "qv"},
            {"history", to_string(kind_)},
            {"actions", actions_},
            {"layout", layout_.to_json()},
            {"coefficients", matrix_columns(coef_)}};
  }

 private:
  std::vector<std::string> actions_;
  DesignLayout layout_;
  Eigen::MatrixXd coef_;
  HistoryKind kind_;
};

class BlipRule final : public StageRule {
 public:
  BlipRule(std::vector<std::string> actions, DesignLayout layout, Eigen::VectorXd coef, HistoryKind kind)
      : actions_(std::move(actions)), layout_(std::move(layout)), coef_(std::move(coef)), kind_(kind) {
    if (actions_.size() != 2) throw UnsupportedError("blip rules need exactly two actions");
    if (coef_.size() != static_cast<Eigen::Index>(layout_.num_columns())) {
      throw FormatError("blip rule coefficient length mismatch");
    }
  }
  std::string kind() const override { return "blip"; }
  HistoryKind history() const override { return kind_; }
  Eigen::VectorXd blip(const HistoryTable& h) const { return layout_.build(h) * coef_; }
  std::vector<std::string> recommend(const HistoryTable& h) const override {
    const Eigen::VectorXd b = blip(h);
    std::vector<std::string> out(h.rows());
    for (std::size_t i = 0; i < h.rows(); ++i) out[i] = b[static_cast<Eigen::Index>(i)] > 0 ? actions_[1] : actions_[0];
    return out;
  }
  json to_json() const override {
    return {{"kind", "blip"},
            {"history", to_string(kind_)},
            {"actions", actions_},
            {"layout", layout_.to_json()},
            {"coefficients", std::vector<double>(coef_.data(), coef_.data() + coef_.size())}};
  }

 private:
  std::vector<std::string> actions_;
  DesignLayout layout_;
  Eigen::VectorXd coef_;
  HistoryKind kind_;
};

class QRule final : public StageRule {
 public:
  QRule(std::vector<std::string> actions, QModel model) : actions_(std::move(actions)), model_(std::move(model)) {}
  std::string kind() const override { return "q"; }
  HistoryKind history() const override { return model_.history(); }
  std::vector<std::string> recommend(const HistoryTable& h) const override {
    return argmax_labels(model_.predict_all(h, actions_), actions_);
  }
  std::optional<Eigen::MatrixXd> values(const HistoryTable& h, const std::vector<std::string>& actions) const override {
    return model_.predict_all(h, actions);
  }
  json to_json() const override { return {{"kind", "q"}, {"actions", actions_}, {"model", model_.to_json()}}; }

 private:
  std::vector<std::string> actions_;
  QModel model_;
};

class CallableRule final : public StageRule {
 public:
  CallableRule(std::string desc, HistoryKind kind, std::function<std::vector<std::string>(const HistoryTable&)> fn)
      : desc_(std::move(desc)), kind_(kind), fn_(std::move(fn)) {}
  std::string kind() const override { return "callable"; }
  HistoryKind history() const override { return kind_; }
  std::vector<std::string> recommend(const HistoryTable& h) const override {
    auto out = fn_(h);
    if (out.size() != h.rows()) throw ValueError("callable rule '" + desc_ + "' returned the wrong number of actions");
    return out;
  }
  json to_json() const override {
    throw UnsupportedError("callable rule '" + desc_ + "' cannot be serialized");
  }

 private:
  std::string desc_;
  HistoryKind kind_;
  std::function<std::vector<std::string>(const HistoryTable&)> fn_;
};

Eigen::MatrixXd columns_matrix(const json& cols, std::size_t rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const auto v = cols[c].get<std::vector<double>>();
    if (v.size() != rows) throw FormatError("coefficient column length mismatch");
    for (std::size_t r = 0; r < rows; ++r) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[r];
  }
  return m;
}

HistoryKind history_of(const json& j) {
  return parse_history_kind(j.value("history", std::string("state")));
}

}  // namespace

RulePtr static_rule(std::string action) { return std::make_shared<StaticRule>(std::move(action)); }

RulePtr linear_threshold_rule(std::vector<std::pair<std::string, double>> coefficients, double intercept,
                              std::string action_if_positive, std::string action_else, HistoryKind history) {
  return std::make_shared<LinearThresholdRule>(std::move(coefficients), intercept, std::move(action_if_positive),
                                               std::move(action_else), history);
}

RulePtr table_rule(std::vector<std::string> variables, std::map<std::vector<std::string>, std::string> entries,
                   std::optional<std::string> default_action, HistoryKind history) {
  for (const auto& [key, a] : entries) {
    if (key.size() != variables.size()) throw ConfigError("table rule key length differs from its variable list");
  }
  return std::make_shared<TableRule>(std::move(variables), std::move(entries), std::move(default_action), history);
}

RulePtr tree_rule(std::vector<std::string> variables, DesignLayout features, PolicyTree tree,
                  std::vector<std::string> actions, HistoryKind history) {
  for (int f : tree.feature) {
    if (static_cast<std::size_t>(f) >= features.num_columns()) throw FormatError("tree feature index out of range");
  }
  for (int a : tree.leaves) {
    if (a < 0 || static_cast<std::size_t>(a) >= actions.size()) throw FormatError("tree leaf out of range");
  }
  return std::make_shared<TreeRule>(std::move(variables), std::move(features), std::move(tree), std::move(actions),
                                    history);
}

RulePtr qv_rule(std::vector<std::string> actions, DesignLayout layout, Eigen::MatrixXd coefficients,
                HistoryKind history) {
  return std::make_shared<QVRule>(std::move(actions), std::move(layout), std::move(coefficients), history);
}

RulePtr blip_rule(std::vector<std::string> actions, DesignLayout layout, Eigen::VectorXd coefficients,
                  HistoryKind history) {
  return std::make_shared<BlipRule>(std::move(actions), std::move(layout), std::move(coefficients), history);
}

RulePtr q_rule(std::vector<std::string> actions, QModel model) {
  return std::make_shared<QRule>(std::move(actions), std::move(model));
}

RulePtr callable_rule(std::string description, HistoryKind history,
                      std::function<std::vector<std::string>(const HistoryTable&)> fn) {
  return std::make_shared<CallableRule>(std::move(description), history, std::move(fn));
}

Eigen::VectorXd blip_values(const StageRule& rule, const HistoryTable& h) {
  const auto* b = dynamic_cast<const BlipRule*>(&rule);
  if (!b) throw UnsupportedError("rule of kind '" + rule.kind() + "' has no blip function");
  return b->blip(h);
}

RulePtr rule_from_json(const json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "static") return static_rule(j.at("action").get<std::string>());
    if (kind == "linear_threshold") {
      std::vector<std::pair<std::string, double>> coefs;
      for (const auto& [name, v] : j.at("coefficients").items()) coefs.emplace_back(name, v.get<double>());
      return linear_threshold_rule(std::move(coefs), j.value("intercept", 0.0),
                                   j.at("action_if_positive").get<std::string>(),
                                   j.at("action_else").get<std::string>(), history_of(j));
    }
    if (kind == "table") {
      std::map<std::vector<std::string>, std::string> entries;
      for (const auto& e : j.at("entries")) {
        entries[e.at("key").get<std::vector<std::string>>()] = e.at("action").get<std::string>();
      }
      std::optional<std::string> def;
      if (j.contains("default")) def = j.at("default").get<std::string>();
      return table_rule(j.at("variables").get<std::vector<std::string>>(), std::move(entries), std::move(def),
                        history_of(j));
    }
    if (kind == "tree") {
      const auto actions = j.at("actions").get<std::vector<std::string>>();
      return tree_rule(j.at("variables").get<std::vector<std::string>>(), DesignLayout::from_json(j.at("layout")),
                       tree_from_json(j.at("tree"), actions), actions, history_of(j));
    }
    if (kind == "qv") {
      auto layout = DesignLayout::from_json(j.at("layout"));
      const auto coef = columns_matrix(j.at("coefficients"), layout.num_columns());
      return qv_rule(j.at("actions").get<std::vector<std::string>>(), std::move(layout), coef, history_of(j));
    }
    if (kind == "blip") {
      auto layout = DesignLayout::from_json(j.at("layout"));
      const auto v = j.at("coefficients").get<std::vector<double>>();
      const Eigen::VectorXd coef = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
      return blip_rule(j.at("actions").get<std::vector<std::string>>(), std::move(layout), coef, history_of(j));
    }
    if (kind == "q") {
      return q_rule(j.at("actions").get<std::vector<std::string>>(), QModel::from_json(j.at("model")));
    }
    throw FormatError("unknown rule kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed rule: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

const StageRule& Policy::rule(int k) const {
  if (rules.empty()) throw ConfigError("policy '" + name + "' has no rules");
  if (rules.size() == 1) return *rules.front();
  if (k < 1 || static_cast<std::size_t>(k) > rules.size()) {
    throw RangeError("policy '" + name + "' has no rule for stage " + std::to_string(k));
  }
  return *rules[static_cast<std::size_t>(k - 1)];
}

int Policy::stages_covered() const {
  return rules.size() == 1 ? std::numeric_limits<int>::max() : static_cast<int>(rules.size());
}

Policy static_policy(const std::string& action, const std::string& name) {
  Policy p;
  p.name = name.empty() ? "A=" + action : name;
  p.rules.push_back(static_rule(action));
  return p;
}

RealisticActionSet realistic_set(const Eigen::MatrixXd& probs, const std::vector<std::string>& actions, double alpha,
                                 const std::vector<std::string>& stage_actions, const std::vector<std::string>& ids,
                                 const std::vector<int>& stages) {
  if (!(alpha >= 0.0 && alpha < 0.5)) throw RangeError("alpha must lie in [0, 0.5)");
  if (probs.cols() != static_cast<Eigen::Index>(actions.size())) throw ValueError("probability columns differ from actions");
  RealisticActionSet ras;
  ras.alpha = alpha;
  ras.actions = stage_actions;
  std::vector<Eigen::Index> col;
  for (const auto& a : stage_actions) {
    auto it = std::find(actions.begin(), actions.end(), a);
    if (it == actions.end()) throw DomainError("stage action '" + a + "' is not in the action set");
    col.push_back(it - actions.begin());
  }
  ras.allowed.resize(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    auto& row = ras.allowed[static_cast<std::size_t>(i)];
    row.resize(col.size());
    bool any = false;
    for (std::size_t a = 0; a < col.size(); ++a) {
      row[a] = probs(i, col[a]) > alpha ? 1 : 0;
      any = any || row[a];
    }
    if (!any) {
      const auto r = static_cast<std::size_t>(i);
      const std::string id = r < ids.size() ? ids[r] : std::to_string(r + 1);
      const std::string st = r < stages.size() ? std::to_string(stages[r]) : "?";
      throw PositivityError("no realistic action at (id " + id + ", stage " + st + ") for alpha " +
                            format_number(alpha));
    }
  }
  return ras;
}

std::vector<std::string> overrule_unrealistic(const std::vector<std::string>& recommended,
                                              const RealisticActionSet& ras) {
  if (ras.actions.size() != 2) throw UnsupportedError("overruling unrealistic actions needs a binary action set");
  if (recommended.size() != ras.allowed.size()) throw ValueError("recommendation rows differ from the realistic set");
  std::vector<std::string> out = recommended;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto it = std::find(ras.actions.begin(), ras.actions.end(), out[i]);
    if (it == ras.actions.end()) throw DomainError("recommended action '" + out[i] + "' outside the stage action set");
    const auto a = static_cast<std::size_t>(it - ras.actions.begin());
    if (!ras.allowed[i][a]) out[i] = ras.actions[1 - a];
  }
  return out;
}

std::vector<std::string> restricted_argmax(const Eigen::MatrixXd& values, const RealisticActionSet& ras) {
  if (values.cols() != static_cast<Eigen::Index>(ras.actions.size()) ||
      values.rows() != static_cast<Eigen::Index>(ras.allowed.size())) {
    throw ValueError("value matrix shape differs from the realistic set");
  }
  std::vector<std::string> out(ras.allowed.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    Eigen::Index best = -1;
    for (Eigen::Index a = 0; a < values.cols(); ++a) {
      const double v = values(static_cast<Eigen::Index>(i), a);
      if (!ras.allowed[i][static_cast<std::size_t>(a)] || std::isnan(v)) continue;
      if (best < 0 || v > values(static_cast<Eigen::Index>(i), best)) best = a;
    }
    if (best < 0) throw PositivityError("no allowed action with a defined value");
    out[i] = ras.actions[static_cast<std::size_t>(best)];
  }
  return out;
}

std::vector<std::string> apply_rule_rows(const Policy& p, int k, const HistoryTable& h_rule, const HistoryTable& h_g) {
  const auto& rule = p.rule(k);
  if (!p.realistic || p.realistic->alpha == 0.0) {
    auto out = rule.recommend(h_rule);
    if (!p.action_set.empty()) {
      for (const auto& a : out) {
        if (std::find(p.action_set.begin(), p.action_set.end(), a) == p.action_set.end()) {
          throw DomainError("policy '" + p.name + "' recommends '" + a + "' outside its action set");
        }
      }
    }
    return out;
  }
  const auto& real = *p.realistic;
  const auto& stage_actions = real.stage_action_sets.at(static_cast<std::size_t>(k - 1));
  const Eigen::MatrixXd probs = real.g.stage_model(k).predict(h_g, p.action_set);
  const auto ras = realistic_set(probs, p.action_set, real.alpha, stage_actions, h_g.ids, h_g.stages);
  if (auto v = rule.values(h_rule, stage_actions)) return restricted_argmax(*v, ras);
  return overrule_unrealistic(rule.recommend(h_rule), ras);
}

std::vector<std::string> apply_policy_stage(const Policy& p, const PolicyData& pd, int k) {
  if (p.stages_covered() < pd.max_stages()) {
    throw ConfigError("policy '" + p.name + "' covers " + std::to_string(p.stages_covered()) + " stages, data has " +
                      std::to_string(pd.max_stages()));
  }
  const auto h_rule = get_history(pd, k, p.rule(k).history());
  if (!p.realistic || p.realistic->alpha == 0.0) return apply_rule_rows(p, k, h_rule, h_rule);
  const auto kind = p.realistic->g.stage_model(k).history();
  if (kind == h_rule.kind) return apply_rule_rows(p, k, h_rule, h_rule);
  return apply_rule_rows(p, k, h_rule, get_history(pd, k, kind));
}

ActionTable apply_policy(const Policy& p, const PolicyData& pd) {
  std::vector<std::vector<std::string>> per_stage;
  std::vector<HistoryTable> keys;
  for (int k = 1; k <= pd.max_stages(); ++k) {
    per_stage.push_back(apply_policy_stage(p, pd, k));
    keys.push_back(get_history(pd, k, HistoryKind::State));
  }
  // Merge into (id, stage) order: subjects are canonical, stages ascending.
  ActionTable out;
  std::vector<std::size_t> cursor(per_stage.size(), 0);
  for (std::size_t s = 0; s < pd.size(); ++s) {
    for (std::size_t k = 0; k < per_stage.size(); ++k) {
      auto& c = cursor[k];
      if (c < keys[k].rows() && keys[k].subjects[c] == s) {
        out.ids.push_back(keys[k].ids[c]);
        out.stages.push_back(static_cast<int>(k) + 1);
        out.actions.push_back(per_stage[k][c]);
        ++c;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

json serialize_policy(const Policy& p) {
  json stages = json::array();
  for (const auto& r : p.rules) stages.push_back(r->to_json());
  json j{{"format", "dtr-policy"},
         {"version", kPolicyFormatVersion},
         {"name", p.name},
         {"action_set", p.action_set},
         {"stages", stages}};
  if (p.realistic) {
    j["realistic"] = {{"alpha", p.realistic->alpha},
                      {"stage_action_sets", p.realistic->stage_action_sets},
                      {"g_model", p.realistic->g.to_json()}};
  }
  return j;
}

Policy deserialize_policy(const json& j) {
  try {
    if (j.value("format", std::string()) != "dtr-policy") throw FormatError("not a dtr-policy document");
    const int version = j.at("version").get<int>();
    if (version != kPolicyFormatVersion) {
      throw FormatError("policy format version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kPolicyFormatVersion) + ")");
    }
    Policy p;
    p.name = j.value("name", std::string("policy"));
    p.action_set = j.value("action_set", std::vector<std::string>{});
    for (const auto& r : j.at("stages")) p.rules.push_back(rule_from_json(r));
    if (p.rules.empty()) throw FormatError("policy without stage rules");
    if (j.contains("realistic")) {
      RealisticSpec real;
      const auto& jr = j.at("realistic");
      real.alpha = jr.at("alpha").get<double>();
      real.stage_action_sets = jr.at("stage_action_sets").get<std::vector<std::vector<std::string>>>();
      real.g = GFit::from_json(jr.at("g_model"));
      p.realistic = std::move(real);
    }
    return p;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed policy: ") + e.what());
  }
}

}  // namespace dtr
