#include "dtr/learning.hpp"

#include "dtr/design.hpp"
#include "dtr/error.hpp"
#include "dtr/regression.hpp"
#include "dtr/tree.hpp"

#include <algorithm>
#include <cmath>

namespace dtr {

using nlohmann::json;

std::string to_string(LearnerKind k) {
  switch (k) {
    case LearnerKind::Ql: return "ql";
    case LearnerKind::Drql: return "drql";
    case LearnerKind::Blip: return "blip";
    case LearnerKind::Ptl: return "ptl";
    case LearnerKind::Wcl: return "wcl";
  }
  return "drql";
}

LearnerKind parse_learner_kind(const std::string& text) {
  for (auto k : {LearnerKind::Ql, LearnerKind::Drql, LearnerKind::Blip, LearnerKind::Ptl, LearnerKind::Wcl}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown learner type '" + text + "' (ql, drql, blip, ptl, wcl)");
}

json PolicyDesign::to_json() const { return {{"formula", formula}, {"history", dtr::to_string(history)}}; }

PolicyDesign PolicyDesign::from_json(const json& j) {
  PolicyDesign d;
  if (j.is_string()) {
    d.formula = j.get<std::string>();
  } else {
    if (!j.is_object()) throw ConfigError("a policy design is a formula string or {formula, history}");
    d.formula = j.value("formula", d.formula);
    if (j.contains("history")) d.history = parse_history_kind(j.at("history").get<std::string>());
  }
  parse_formula(d.formula);
  return d;
}

json LearnerConfig::to_json() const {
  json designs_j = json::array(), g = json::array(), q = json::array();
  for (const auto& d : designs) designs_j.push_back(d.to_json());
  for (const auto& s : g_specs) g.push_back(s.to_json());
  for (const auto& s : q_specs) q.push_back(s.to_json());
  return {{"type", dtr::to_string(type)}, {"designs", designs_j}, {"g_models", g}, {"q_models", q},
          {"folds", L},   {"alpha", alpha},  {"depth", depth},     {"cross_fit_g", cross_fit_g},
          {"seed", seed}};
}

LearnerConfig LearnerConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("learner config must be a JSON object");
  static const std::vector<std::string> known{"type",  "designs", "g_models", "q_models", "folds",
                                              "alpha", "depth",   "cross_fit_g", "seed"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown learner key '" + key + "'");
  }
  try {
    LearnerConfig c;
    if (j.contains("type")) c.type = parse_learner_kind(j.at("type").get<std::string>());
    auto spec_list = [&](const char* key, std::vector<ModelSpec>& out) {
      if (!j.contains(key)) return;
      out.clear();
      const auto& v = j.at(key);
      if (v.is_array()) {
        for (const auto& s : v) out.push_back(ModelSpec::from_json(s));
      } else {
        out.push_back(ModelSpec::from_json(v));
      }
    };
    spec_list("g_models", c.g_specs);
    spec_list("q_models", c.q_specs);
    if (j.contains("designs")) {
      c.designs.clear();
      const auto& v = j.at("designs");
      if (v.is_array()) {
        for (const auto& d : v) c.designs.push_back(PolicyDesign::from_json(d));
      } else {
        c.designs.push_back(PolicyDesign::from_json(v));
      }
    }
    c.L = j.value("folds", c.L);
    c.alpha = j.value("alpha", c.alpha);
    c.depth = j.value("depth", c.depth);
    c.cross_fit_g = j.value("cross_fit_g", c.cross_fit_g);
    c.seed = j.value("seed", c.seed);
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed learner config: ") + e.what());
  }
}

namespace {

const PolicyDesign& design_for(const LearnerConfig& cfg, int k, int K) {
  if (cfg.designs.size() == 1) return cfg.designs.front();
  if (static_cast<int>(cfg.designs.size()) != K) {
    throw ConfigError("expected 1 or " + std::to_string(K) + " policy designs, got " + std::to_string(cfg.designs.size()));
  }
  return cfg.designs[static_cast<std::size_t>(k - 1)];
}

void check_config(const LearnerConfig& cfg) {
  if (cfg.L < 1) throw RangeError("folds must be at least 1");
  if (!(cfg.alpha >= 0.0 && cfg.alpha < 0.5)) throw RangeError("alpha must lie in [0, 0.5)");
  if (cfg.depth != 1 && cfg.depth != 2) throw RangeError("tree depth must be 1 or 2");
}

// Columns of the stage action set within the full action set.
std::vector<Eigen::Index> stage_columns(const PolicyData& pd, int k) {
  std::vector<Eigen::Index> cols;
  for (const auto& a : pd.stage_action_set(k)) cols.push_back(pd.action_index(a));
  return cols;
}

// Stage-k recommendations, restricted to the realistic set of `probs` when alpha > 0.
std::vector<std::string> realize(const StageRule& rule, const HistoryTable& h, const Eigen::MatrixXd* probs,
                                 double alpha, const PolicyData& pd, int k) {
  if (alpha == 0.0 || probs == nullptr) return rule.recommend(h);
  const auto& stage_actions = pd.stage_action_set(k);
  const auto ras = realistic_set(*probs, pd.action_set(), alpha, stage_actions, h.ids, h.stages);
  if (auto v = rule.values(h, stage_actions)) return restricted_argmax(*v, ras);
  return overrule_unrealistic(rule.recommend(h), ras);
}

DesignLayout policy_layout(const PolicyDesign& d, const HistoryTable& h, bool tree) {
  DesignSpec spec = parse_formula(d.formula);
  if (tree) spec.intercept = false;
  auto layout = DesignLayout::make(spec, h, nullptr, tree ? Coding::OneHot : Coding::Treatment);
  if (layout.uses_action()) throw ConfigError("policy design '" + d.formula + "' may not use the action column");
  if (tree && layout.num_columns() == 0) throw ConfigError("tree design '" + d.formula + "' has no features");
  return layout;
}

RulePtr fit_stage_rule(LearnerKind kind, const PolicyData& pd, int k, const PolicyDesign& design, const HistoryTable& h,
                       const Eigen::MatrixXd& scores, int depth, json& diag_stage) {
  const auto& stage_actions = pd.stage_action_set(k);
  const auto cols = stage_columns(pd, k);
  const auto m = static_cast<Eigen::Index>(cols.size());
  Eigen::MatrixXd G(scores.rows(), m);
  for (Eigen::Index c = 0; c < m; ++c) G.col(c) = scores.col(cols[static_cast<std::size_t>(c)]);
  if (!G.allFinite()) throw FitError("stage " + std::to_string(k) + " scores are not finite");
  if (m == 1) {
    diag_stage["single_action"] = true;
    return static_rule(stage_actions.front());
  }
  const bool binary_only = kind == LearnerKind::Blip || kind == LearnerKind::Wcl;
  if (binary_only && m != 2) {
    throw UnsupportedError(to_string(kind) + " needs a binary action set at stage " + std::to_string(k) + ", got " +
                           std::to_string(m) + " actions");
  }
  switch (kind) {
    case LearnerKind::Drql: {
      const auto layout = policy_layout(design, h, false);
      const Eigen::MatrixXd X = layout.build(h);
      Eigen::MatrixXd coef(X.cols(), m);
      for (Eigen::Index a = 0; a < m; ++a) coef.col(a) = fit_ols(X, G.col(a)).coef;
      if (m == 2) {
        const Eigen::VectorXd b = X * (coef.col(1) - coef.col(0));
        diag_stage["near_zero_blips"] = (b.array().abs() < kBlipTolerance).count();
      }
      return qv_rule(stage_actions, layout, coef, design.history);
    }
    case LearnerKind::Blip: {
      const auto layout = policy_layout(design, h, false);
      const Eigen::MatrixXd X = layout.build(h);
      const Eigen::VectorXd W = G.col(1) - G.col(0);
      const Eigen::VectorXd coef = fit_ols(X, W).coef;
      diag_stage["near_zero_blips"] = ((X * coef).array().abs() < kBlipTolerance).count();
      return blip_rule(stage_actions, layout, coef, design.history);
    }
    case LearnerKind::Ptl:
    case LearnerKind::Wcl: {
      const auto layout = policy_layout(design, h, true);
      ScoredSample s;
      s.features = layout.build(h);
      if (kind == LearnerKind::Ptl) {
        s.gamma = G;
      } else {
        // Classification with label I{W > 0} and weight |W| is value search on [0, W].
        s.gamma = Eigen::MatrixXd::Zero(G.rows(), 2);
        s.gamma.col(1) = G.col(1) - G.col(0);
        if ((s.gamma.col(1).array() == 0.0).all()) diag_stage["degenerate_weights"] = true;
      }
      const auto tree = exact_tree_search(s, depth);
      diag_stage["objective"] = tree_objective(tree, s);
      return tree_rule(layout.history_variables(), layout, tree, stage_actions, design.history);
    }
    case LearnerKind::Ql: break;
  }
  throw ConfigError("learner kind has no score-based stage rule");
}

PolicyObject learn_scored(const PolicyData& pd, const LearnerConfig& cfg, Diagnostics* diag) {
  check_config(cfg);
  const int K = pd.max_stages();
  for (int k = 1; k <= K; ++k) design_for(cfg, k, K);
  PolicyObject po;
  po.kind = cfg.type;
  po.action_set = pd.action_set();
  po.alpha = cfg.alpha;
  po.folds = make_folds(pd.ids(), cfg.L, cfg.seed);
  po.rules.resize(static_cast<std::size_t>(K));
  po.stage_scores.resize(static_cast<std::size_t>(K));
  for (int k = 1; k <= K; ++k) po.stage_action_sets.push_back(pd.stage_action_set(k));

  CrossFitEngine engine(pd, cfg.g_specs, cfg.q_specs, po.folds, {true, true, cfg.cross_fit_g}, diag);
  std::vector<json> per_stage(static_cast<std::size_t>(K), json::object());
  for (int k = K; k >= 1; --k) {
    const auto ks = static_cast<std::size_t>(k - 1);
    engine.fit_stage(k);
    po.stage_scores[ks] = engine.pooled_scores(k);
    const auto& design = design_for(cfg, k, K);
    const auto& h = engine.history(k, design.history);
    po.rules[ks] = fit_stage_rule(cfg.type, pd, k, design, h, po.stage_scores[ks], cfg.depth, per_stage[ks]);
    // Later stages of fold l follow fold l's realistic set (g_l).
    for (int l = 0; l < engine.num_folds(); ++l) {
      const Eigen::MatrixXd* probs = cfg.alpha > 0.0 ? &engine.g(l, k) : nullptr;
      engine.set_policy(l, k, realize(*po.rules[ks], h, probs, cfg.alpha, pd, k));
    }
  }
  if (cfg.alpha > 0.0) {
    const bool refit = cfg.cross_fit_g && engine.num_folds() > 1;
    std::vector<std::size_t> all(pd.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    po.g_full = refit ? fit_g(pd, cfg.g_specs, all, diag) : engine.g_fit(0);
  }
  po.diagnostics = {{"stages", per_stage}, {"g_floor_bound", engine.floor_bound()}, {"config", cfg.to_json()}};
  return po;
}

}  // namespace

PolicyObject learn_ql(const PolicyData& pd, const std::vector<ModelSpec>& q_specs, double alpha,
                      const std::vector<ModelSpec>& g_specs, Diagnostics* diag) {
  if (!(alpha >= 0.0 && alpha < 0.5)) throw RangeError("alpha must lie in [0, 0.5)");
  const int K = pd.max_stages();
  PolicyObject po;
  po.kind = LearnerKind::Ql;
  po.action_set = pd.action_set();
  po.alpha = alpha;
  po.folds = make_folds(pd.ids(), 1, 0);
  po.rules.resize(static_cast<std::size_t>(K));
  for (int k = 1; k <= K; ++k) po.stage_action_sets.push_back(pd.stage_action_set(k));
  const bool need_g = alpha > 0.0;
  CrossFitEngine engine(pd, need_g ? g_specs : std::vector<ModelSpec>{}, q_specs, po.folds, {need_g, true, true}, diag);
  for (int k = K; k >= 1; --k) {
    engine.fit_stage(k);
    const auto ks = static_cast<std::size_t>(k - 1);
    po.rules[ks] = q_rule(pd.stage_action_set(k), engine.q_model(0, k));
    const auto& h = engine.history(k, po.rules[ks]->history());
    engine.set_policy(0, k, realize(*po.rules[ks], h, need_g ? &engine.g(0, k) : nullptr, alpha, pd, k));
  }
  if (need_g) po.g_full = engine.g_fit(0);
  json qs = json::array();
  for (const auto& s : q_specs) qs.push_back(s.to_json());
  po.diagnostics = {{"q_models", qs}};
  return po;
}

PolicyObject learn_drql(const PolicyData& pd, LearnerConfig cfg, Diagnostics* diag) {
  cfg.type = LearnerKind::Drql;
  return learn_scored(pd, cfg, diag);
}

PolicyObject learn_blip(const PolicyData& pd, LearnerConfig cfg, Diagnostics* diag) {
  cfg.type = LearnerKind::Blip;
  return learn_scored(pd, cfg, diag);
}

PolicyObject learn_wcl(const PolicyData& pd, LearnerConfig cfg, Diagnostics* diag) {
  cfg.type = LearnerKind::Wcl;
  return learn_scored(pd, cfg, diag);
}

PolicyObject recursive_value_search(const PolicyData& pd, LearnerConfig cfg, Diagnostics* diag) {
  cfg.type = LearnerKind::Ptl;
  return learn_scored(pd, cfg, diag);
}

PolicyObject learn(const PolicyData& pd, const LearnerConfig& cfg, Diagnostics* diag) {
  if (cfg.type == LearnerKind::Ql) return learn_ql(pd, cfg.q_specs, cfg.alpha, cfg.g_specs, diag);
  return learn_scored(pd, cfg, diag);
}

Policy get_policy(const PolicyObject& po) {
  Policy p;
  p.name = to_string(po.kind);
  p.action_set = po.action_set;
  p.rules = po.rules;
  if (po.alpha > 0.0) {
    if (!po.g_full) throw ConfigError("realistic policy object lacks its full-data g-model");
    p.realistic = RealisticSpec{po.alpha, *po.g_full, po.stage_action_sets};
  }
  return p;
}

std::function<std::vector<std::string>(const HistoryTable&)> get_policy_functions(const PolicyObject& po, int stage) {
  if (stage < 1 || stage > static_cast<int>(po.rules.size())) {
    throw RangeError("stage " + std::to_string(stage) + " out of range 1.." + std::to_string(po.rules.size()));
  }
  Policy p = get_policy(po);
  return [p = std::move(p), stage](const HistoryTable& h) { return apply_rule_rows(p, stage, h, h); };
}

PolicyLearner make_learner(const LearnerConfig& cfg) {
  return [cfg](const PolicyData& train, std::uint64_t seed) {
    LearnerConfig c = cfg;
    c.seed = seed;
    return get_policy(learn(train, c));
  };
}

}  // namespace dtr
