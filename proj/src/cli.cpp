#include "dtr/cli.hpp"

#include "dtr/data_model.hpp"
#include "dtr/error.hpp"
#include "dtr/evaluation.hpp"
#include "dtr/learning.hpp"
#include "dtr/policy.hpp"
#include "dtr/simulation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace dtr {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// Config access with JSON-pointer error paths

[[noreturn]] void bad(const std::string& ptr, const std::string& msg) { throw ConfigError(ptr + ": " + msg); }

std::string child(const std::string& ptr, const std::string& key) { return ptr + "/" + key; }

void check_keys(const ojson& j, const std::string& ptr, const std::vector<std::string>& known) {
  if (!j.is_object()) bad(ptr.empty() ? "/" : ptr, "expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) bad(child(ptr, key), "unknown key");
  }
}

const ojson& required(const ojson& j, const std::string& key, const std::string& ptr) {
  if (!j.contains(key)) bad(child(ptr, key), "required key is missing");
  return j.at(key);
}

std::string as_string(const ojson& v, const std::string& ptr) {
  if (!v.is_string()) bad(ptr, "expected a string");
  return v.get<std::string>();
}

int as_int(const ojson& v, const std::string& ptr) {
  if (!v.is_number_integer()) bad(ptr, "expected an integer");
  return v.get<int>();
}

bool as_bool(const ojson& v, const std::string& ptr) {
  if (!v.is_boolean()) bad(ptr, "expected true or false");
  return v.get<bool>();
}

// A string or an array of strings.
std::vector<std::string> string_list(const ojson& v, const std::string& ptr) {
  if (v.is_string()) return {v.get<std::string>()};
  if (!v.is_array()) bad(ptr, "expected a string or an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_string(v[i], child(ptr, std::to_string(i))));
  return out;
}

json plain(const ojson& v) { return json::parse(v.dump()); }

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

ojson read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  try {
    return ojson::parse(in);
  } catch (const ojson::parse_error& e) {
    throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_text(const std::optional<std::string>& path, const std::string& text, std::ostream& out) {
  if (!path) {
    out << text;
    return;
  }
  std::ofstream f(*path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + *path + "'");
  f << text;
}

// ---------------------------------------------------------------------------
// Data

struct LoadedData {
  PolicyData pd;
  std::vector<std::string> clusters;  // aligned with pd.ids() when a cluster column is given
};

std::map<std::string, std::string> column_by_id(const Table& t, const std::vector<std::string>& ids,
                                                const std::string& col, const std::string& ptr) {
  if (!t.find(col)) bad(ptr, "column '" + col + "' is not in the data");
  const auto values = t.column(col);
  std::map<std::string, std::string> out;
  for (std::size_t r = 0; r < values.size(); ++r) {
    if (is_missing_cell(values[r])) throw ValueError("missing '" + col + "' for id " + ids[r]);
    auto [it, inserted] = out.emplace(ids[r], values[r]);
    if (!inserted && it->second != values[r]) throw ValueError("id " + ids[r] + " has conflicting '" + col + "' values");
  }
  return out;
}

LoadedData load_data(const ojson& d, const std::string& ptr, const fs::path& base,
                     const std::optional<std::string>& cluster_col, const std::string& cluster_ptr) {
  const std::string layout = d.contains("layout") ? as_string(d.at("layout"), child(ptr, "layout")) : "wide";
  std::optional<std::vector<std::string>> action_set;
  if (d.contains("action_set")) action_set = string_list(d.at("action_set"), child(ptr, "action_set"));
  std::map<std::string, std::string> cluster_of;

  std::optional<PolicyData> pd;
  if (layout == "wide") {
    check_keys(d, ptr, {"layout", "path", "action", "covariates", "utility", "baseline", "id", "action_set", "augment", "partial"});
    const Table t = read_csv(resolve(base, as_string(required(d, "path", ptr), child(ptr, "path"))).string());
    WideSpec spec;
    spec.action_cols = string_list(required(d, "action", ptr), child(ptr, "action"));
    const std::size_t K = spec.action_cols.size();
    if (d.contains("covariates")) {
      const auto& cv = d.at("covariates");
      const auto cptr = child(ptr, "covariates");
      if (cv.is_array()) {
        // Shorthand for one stage: each name is its own column.
        if (K != 1) bad(cptr, "a list of names is only valid for one stage; use {name: [columns per stage]}");
        for (const auto& name : string_list(cv, cptr)) spec.covariates.push_back({name, {name}});
      } else if (cv.is_object()) {
        for (const auto& [name, cols] : cv.items()) {
          const auto vptr = child(cptr, name);
          std::vector<std::optional<std::string>> per_stage;
          if (cols.is_string()) {
            per_stage.push_back(cols.get<std::string>());
          } else if (cols.is_array()) {
            for (std::size_t i = 0; i < cols.size(); ++i) {
              if (cols[i].is_null()) {
                per_stage.push_back(std::nullopt);
              } else {
                per_stage.push_back(as_string(cols[i], child(vptr, std::to_string(i))));
              }
            }
          } else {
            bad(vptr, "expected a column name or a list of columns (null where not measured)");
          }
          if (per_stage.size() != K) bad(vptr, "expected " + std::to_string(K) + " columns, one per stage");
          spec.covariates.push_back({name, per_stage});
        }
      } else {
        bad(cptr, "expected an object or a list of names");
      }
    }
    spec.utility_cols = string_list(required(d, "utility", ptr), child(ptr, "utility"));
    if (d.contains("baseline")) spec.baseline_cols = string_list(d.at("baseline"), child(ptr, "baseline"));
    if (d.contains("id")) spec.id_col = as_string(d.at("id"), child(ptr, "id"));
    spec.action_set = action_set;
    pd = ingest_wide(t, spec);
    if (cluster_col) {
      std::vector<std::string> ids;
      if (spec.id_col) {
        ids = t.column(*spec.id_col);
      } else {
        for (std::size_t r = 0; r < t.num_rows(); ++r) ids.push_back(std::to_string(r + 1));
      }
      cluster_of = column_by_id(t, ids, *cluster_col, cluster_ptr);
    }
  } else if (layout == "long") {
    check_keys(d, ptr, {"layout", "path", "baseline_path", "id", "stage", "event", "action", "reward", "covariates",
                        "baseline", "action_set", "augment", "partial"});
    const Table t = read_csv(resolve(base, as_string(required(d, "path", ptr), child(ptr, "path"))).string());
    std::optional<Table> bt;
    if (d.contains("baseline_path")) bt = read_csv(resolve(base, as_string(d.at("baseline_path"), child(ptr, "baseline_path"))).string());
    LongSpec spec;
    if (d.contains("id")) spec.id_col = as_string(d.at("id"), child(ptr, "id"));
    if (d.contains("stage")) spec.stage_col = as_string(d.at("stage"), child(ptr, "stage"));
    if (d.contains("event")) spec.event_col = as_string(d.at("event"), child(ptr, "event"));
    if (d.contains("action")) spec.action_col = as_string(d.at("action"), child(ptr, "action"));
    if (d.contains("reward")) spec.reward_col = as_string(d.at("reward"), child(ptr, "reward"));
    if (d.contains("covariates")) spec.covariates = string_list(d.at("covariates"), child(ptr, "covariates"));
    if (d.contains("baseline")) spec.baseline_cols = string_list(d.at("baseline"), child(ptr, "baseline"));
    spec.action_set = action_set;
    pd = ingest_long(t, bt, spec);
    if (cluster_col) {
      const Table& src = bt && bt->find(*cluster_col) ? *bt : t;
      cluster_of = column_by_id(src, src.column(spec.id_col), *cluster_col, cluster_ptr);
    }
  } else {
    bad(child(ptr, "layout"), "expected \"wide\" or \"long\"");
  }
  if (d.contains("augment")) pd = augment_stages(*pd, as_string(d.at("augment"), child(ptr, "augment")));
  if (d.contains("partial")) pd = partial(*pd, as_int(d.at("partial"), child(ptr, "partial")));

  LoadedData out{std::move(*pd), {}};
  if (cluster_col) {
    for (const auto& id : out.pd.ids()) {
      auto it = cluster_of.find(id);
      if (it == cluster_of.end()) throw KeyError("no cluster for id " + id);
      out.clusters.push_back(it->second);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Models and policies

std::vector<ModelSpec> model_list(const ojson& cfg, const std::string& key, ModelSpec fallback) {
  if (!cfg.contains(key)) return {fallback};
  const auto& v = cfg.at(key);
  const auto ptr = "/" + key;
  std::vector<ModelSpec> out;
  auto one = [&](const ojson& s, const std::string& p) {
    try {
      return ModelSpec::from_json(plain(s));
    } catch (const Error& e) {
      rethrow_with_context(e, p);
    }
  };
  if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(one(v[i], child(ptr, std::to_string(i))));
  } else {
    out.push_back(one(v, ptr));
  }
  if (out.empty()) bad(ptr, "at least one model is required");
  return out;
}

Policy load_policy(const ojson& p, const std::string& ptr, const fs::path& base) {
  if (p.is_string()) return static_policy(p.get<std::string>());
  if (!p.is_object()) bad(ptr, "expected an action label or a policy object");
  if (p.contains("format")) return deserialize_policy(plain(p));
  if (p.contains("static")) {
    check_keys(p, ptr, {"static", "name"});
    return static_policy(as_string(p.at("static"), child(ptr, "static")),
                         p.contains("name") ? as_string(p.at("name"), child(ptr, "name")) : "");
  }
  if (p.contains("file")) {
    check_keys(p, ptr, {"file"});
    return deserialize_policy(plain(read_json_file(resolve(base, as_string(p.at("file"), child(ptr, "file"))))));
  }
  if (p.contains("builtin")) {
    check_keys(p, ptr, {"builtin", "par"});
    const auto which = as_string(p.at("builtin"), child(ptr, "builtin"));
    const json par = p.contains("par") ? plain(p.at("par")) : json::object();
    if (which == "optimal_single") return optimal_policy_single(SingleStageParams::from_json(par));
    if (which == "optimal_two") return optimal_policy_two_stage(TwoStageParams::from_json(par));
    bad(child(ptr, "builtin"), "expected \"optimal_single\" or \"optimal_two\"");
  }
  bad(ptr, "expected one of: an action label, {static}, {file}, {builtin} or a serialized policy");
}

// Nuisance models missing from the learner block are taken from the run's
// top-level g_models / q_models.
LearnerConfig load_learner(const ojson& l, const std::string& ptr, const ojson& cfg) {
  try {
    json j = plain(l);
    if (j.is_object()) {
      for (const char* key : {"g_models", "q_models"}) {
        if (!j.contains(key) && cfg.contains(key)) j[key] = plain(cfg.at(key));
      }
    }
    return LearnerConfig::from_json(j);
  } catch (const Error& e) {
    rethrow_with_context(e, ptr);
  }
}

// Variables a serialized rule reads from its history.
void collect_variables(const json& j, std::set<std::string>& out) {
  if (j.is_object()) {
    if (j.value("kind", "") == "linear_threshold" && j.contains("coefficients")) {
      for (const auto& [name, c] : j.at("coefficients").items()) out.insert(name);
    }
    for (const auto& [key, v] : j.items()) {
      if (key == "variables" && v.is_array()) {
        for (const auto& e : v) {
          if (e.is_string()) out.insert(e.get<std::string>());
          if (e.is_object() && e.contains("name")) out.insert(e.at("name").get<std::string>());
        }
      } else {
        collect_variables(v, out);
      }
    }
  } else if (j.is_array()) {
    for (const auto& e : j) collect_variables(e, out);
  }
}

void check_policy_columns(const Policy& p, const PolicyData& pd) {
  for (int k = 1; k <= pd.max_stages(); ++k) {
    const auto& rule = p.rule(k);
    if (rule.kind() == "callable") continue;
    std::set<std::string> need;
    collect_variables(rule.to_json(), need);
    need.erase("A");
    const auto names = history_names(pd, k, rule.history());
    std::vector<std::string> missing;
    for (const auto& v : need) {
      if (std::find(names.begin(), names.end(), v) == names.end()) missing.push_back(v);
    }
    if (!missing.empty()) {
      std::string list;
      for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
      throw SchemaError("stage " + std::to_string(k) + " of policy '" + p.name + "' needs columns missing from the " +
                        to_string(rule.history()) + " history: " + list);
    }
  }
}

// ---------------------------------------------------------------------------
// Output

json result_json(const EvalResult& r) {
  json j = r.to_json();
  j["metadata"] = r.metadata;
  return j;
}

std::string ic_csv(const EvalResult& r) {
  Table t;
  t.header = {"id", "ic"};
  for (std::size_t i = 0; i < r.ids.size(); ++i) t.rows.push_back({r.ids[i], format_number(r.ic[static_cast<Eigen::Index>(i)])});
  std::ostringstream os;
  write_csv(os, t);
  return os.str();
}

// ---------------------------------------------------------------------------
// Subcommands

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> M;
  int threads = 1;
  std::optional<std::string> out;
  std::optional<std::string> ic_out;
  std::optional<std::string> value_out;
  std::optional<std::string> policy;
};

json parse_par(const std::string& text) {
  json j = json::object();
  if (text.empty()) return j;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("--par entries must look like key=value, got '" + item + "'");
    const auto key = item.substr(0, eq);
    const auto value = parse_number(item.substr(eq + 1));
    if (!value) throw ConfigError("--par value for '" + key + "' is not a number");
    j[key] = *value;
  }
  return j;
}

int cmd_simulate(const std::string& model, std::size_t n, std::uint64_t seed, const std::string& par,
                 const std::optional<std::string>& out_path, std::ostream& out) {
  const json p = parse_par(par);
  Simulated sim = [&] {
    if (model == "single") return sim_single_stage(n, seed, SingleStageParams::from_json(p));
    if (model == "two") return sim_two_stage(n, seed, TwoStageParams::from_json(p));
    throw ConfigError("--model must be 'single' or 'two'");
  }();
  std::ostringstream os;
  write_csv(os, sim.table);
  write_text(out_path, os.str(), out);
  return kExitOk;
}

struct RunSetup {
  ojson cfg;
  fs::path base;
  std::uint64_t seed = 0;
  int M = 1;
  bool cross_fit_g = true;
};

RunSetup setup(const CommonFlags& f) {
  RunSetup s;
  const fs::path path(f.config);
  s.cfg = read_json_file(path);
  s.base = path.has_parent_path() ? path.parent_path() : fs::current_path();
  if (s.cfg.contains("seed")) {
    const auto& v = s.cfg.at("seed");
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) bad("/seed", "expected a non-negative integer");
    s.seed = v.get<std::uint64_t>();
  }
  if (s.cfg.contains("folds")) s.M = as_int(s.cfg.at("folds"), "/folds");
  if (s.cfg.contains("cross_fit_g")) s.cross_fit_g = as_bool(s.cfg.at("cross_fit_g"), "/cross_fit_g");
  if (f.seed) s.seed = *f.seed;
  if (f.M) s.M = *f.M;
  if (s.M < 1) bad("/folds", "must be at least 1");
  if (f.threads < 1) throw ConfigError("--threads must be at least 1");
  return s;
}

int cmd_evaluate(const CommonFlags& f, std::ostream& out, std::ostream& err) {
  const auto s = setup(f);
  const auto& cfg = s.cfg;
  check_keys(cfg, "", {"data", "estimator", "policy", "learner", "g_models", "q_models", "folds", "seed", "cross_fit_g",
                       "cluster", "conditional"});
  if (cfg.contains("policy") == cfg.contains("learner")) bad("/policy", "give exactly one of 'policy' or 'learner'");
  const std::string estimator = cfg.contains("estimator") ? as_string(cfg.at("estimator"), "/estimator") : "dr";
  if (estimator != "dr" && estimator != "ipw" && estimator != "or") bad("/estimator", "expected \"dr\", \"ipw\" or \"or\"");
  std::optional<std::string> cluster;
  if (cfg.contains("cluster")) cluster = as_string(cfg.at("cluster"), "/cluster");
  const auto data = load_data(required(cfg, "data", ""), "/data", s.base, cluster, "/cluster");
  const auto g = model_list(cfg, "g_models", ModelSpec::default_g());
  const auto q = model_list(cfg, "q_models", ModelSpec::default_q());
  const EvalOptions opt{s.M, s.seed, s.cross_fit_g, f.threads};

  Diagnostics diag;
  EvalResult r;
  if (cfg.contains("learner")) {
    if (estimator != "dr") bad("/estimator", "learned policies are evaluated with \"dr\" only");
    const auto lc = load_learner(cfg.at("learner"), "/learner", cfg);
    r = value_of_learner(data.pd, make_learner(lc), to_string(lc.type), g, q, opt, &diag);
    r.metadata["learner"] = lc.to_json();
  } else {
    const Policy p = load_policy(cfg.at("policy"), "/policy", s.base);
    check_policy_columns(p, data.pd);
    if (estimator == "dr") r = value_dr(data.pd, p, g, q, opt, &diag);
    if (estimator == "ipw") r = value_ipw(data.pd, p, g, opt, &diag);
    if (estimator == "or") r = value_or(data.pd, p, q, opt, &diag);
  }
  const EvalResult base_result = r;
  if (cluster) r = clustered_variance(r, data.clusters);
  json j = result_json(r);
  if (cfg.contains("conditional")) {
    const auto var = as_string(cfg.at("conditional"), "/conditional");
    json levels = json::array();
    for (const auto& [level, c] : conditional_value(base_result, data.pd, var, &diag)) {
      json cj = result_json(c);
      cj["level"] = level;
      levels.push_back(cj);
    }
    j["conditional"] = levels;
  }
  for (const auto& w : diag.warnings) err << "warning: " << w << "\n";
  write_text(f.out, j.dump(2) + "\n", out);
  if (f.ic_out) write_text(f.ic_out, ic_csv(r), out);
  return kExitOk;
}

int cmd_learn(const CommonFlags& f, std::ostream& out, std::ostream& err) {
  const auto s = setup(f);
  const auto& cfg = s.cfg;
  check_keys(cfg, "", {"data", "learner", "g_models", "q_models", "folds", "seed", "cross_fit_g"});
  const auto data = load_data(required(cfg, "data", ""), "/data", s.base, std::nullopt, "");
  auto lc = load_learner(required(cfg, "learner", ""), "/learner", cfg);
  if (f.seed || cfg.contains("seed")) lc.seed = s.seed;
  Diagnostics diag;
  const auto po = learn(data.pd, lc, &diag);
  json pj = serialize_policy(get_policy(po));
  pj["metadata"] = {{"learner", lc.to_json()}, {"alpha", po.alpha}, {"diagnostics", po.diagnostics}};
  write_text(f.out, pj.dump(2) + "\n", out);
  if (f.value_out) {
    const auto g = model_list(cfg, "g_models", ModelSpec::default_g());
    const auto q = model_list(cfg, "q_models", ModelSpec::default_q());
    const EvalOptions opt{s.M, s.seed, s.cross_fit_g, f.threads};
    auto r = value_of_learner(data.pd, make_learner(lc), to_string(lc.type), g, q, opt, &diag);
    r.metadata["learner"] = lc.to_json();
    write_text(f.value_out, result_json(r).dump(2) + "\n", out);
  }
  for (const auto& w : diag.warnings) err << "warning: " << w << "\n";
  return kExitOk;
}

int cmd_apply(const CommonFlags& f, std::ostream& out) {
  const auto s = setup(f);
  check_keys(s.cfg, "", {"data", "policy", "g_models", "q_models", "folds", "seed", "cross_fit_g", "estimator", "learner",
                         "cluster", "conditional"});
  const auto data = load_data(required(s.cfg, "data", ""), "/data", s.base, std::nullopt, "");
  Policy p;
  if (f.policy) {
    p = deserialize_policy(plain(read_json_file(*f.policy)));
  } else {
    p = load_policy(required(s.cfg, "policy", ""), "/policy", s.base);
  }
  check_policy_columns(p, data.pd);
  const auto acts = apply_policy(p, data.pd);
  Table t;
  t.header = {"id", "stage", "d"};
  for (std::size_t i = 0; i < acts.ids.size(); ++i) t.rows.push_back({acts.ids[i], std::to_string(acts.stages[i]), acts.actions[i]});
  std::ostringstream os;
  write_csv(os, t);
  write_text(f.out, os.str(), out);
  return kExitOk;
}

int exit_code(ErrorClass c) {
  switch (c) {
    case ErrorClass::Config: return kExitConfig;
    case ErrorClass::Data: return kExitData;
    case ErrorClass::Numerical: return kExitNumerical;
  }
  return kExitConfig;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Doubly robust evaluation and learning of dynamic treatment regimes", "dtrkit"};
  app.require_subcommand(1);
  CommonFlags flags;

  std::string model = "single";
  std::size_t n = 500;
  std::uint64_t sim_seed = 1;
  std::string par;
  std::optional<std::string> sim_out;
  auto* sim = app.add_subcommand("simulate", "Simulate one of the benchmark data sets as CSV");
  sim->add_option("--model", model, "single | two")->check(CLI::IsMember({"single", "two"}));
  sim->add_option("--n", n, "Number of subjects")->check(CLI::PositiveNumber);
  sim->add_option("--seed", sim_seed, "Seed");
  sim->add_option("--par", par, "Parameters as key=value,... (single: p,k,d,a,b,c,s; two: gamma,beta)");
  sim->add_option("--out", sim_out, "Output CSV (default stdout)");

  auto add_run_flags = [&](CLI::App* c, bool with_ic) {
    c->add_option("--config", flags.config, "Run configuration (JSON)")->required();
    c->add_option("--seed", flags.seed, "Override the configured seed");
    c->add_option("--M", flags.M, "Override the number of cross-fitting folds");
    c->add_option("--threads", flags.threads, "Worker threads for per-fold learner fits");
    c->add_option("--out", flags.out, "Output path (default stdout)");
    if (with_ic) c->add_option("--ic-out", flags.ic_out, "Influence-curve CSV (id, ic)");
  };
  auto* eval = app.add_subcommand("evaluate", "Estimate the value of a policy or of a learner");
  add_run_flags(eval, true);
  auto* lrn = app.add_subcommand("learn", "Learn a policy and write it as JSON");
  add_run_flags(lrn, false);
  lrn->add_option("--value-out", flags.value_out, "Also write the cross-fitted value of the learner");
  auto* apl = app.add_subcommand("apply", "Apply a policy to data and write (id, stage, d)");
  add_run_flags(apl, false);
  apl->add_option("--policy", flags.policy, "Policy JSON (overrides the configured policy)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (sim->parsed()) return cmd_simulate(model, n, sim_seed, par, sim_out, out);
    if (eval->parsed()) return cmd_evaluate(flags, out, err);
    if (lrn->parsed()) return cmd_learn(flags, out, err);
    if (apl->parsed()) return cmd_apply(flags, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.error_class());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace dtr
