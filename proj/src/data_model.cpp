#include "dtr/data_model.hpp"

#include "dtr/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace dtr {

std::string to_string(HistoryKind kind) { return kind == HistoryKind::Full ? "full" : "state"; }

HistoryKind parse_history_kind(const std::string& text) {
  if (text == "full") return HistoryKind::Full;
  if (text == "state") return HistoryKind::State;
  throw ConfigError("history kind must be 'full' or 'state', got '" + text + "'");
}

bool natural_less(const std::string& a, const std::string& b) {
  const auto na = parse_number(a);
  const auto nb = parse_number(b);
  if (na && nb) {
    if (*na != *nb) return *na < *nb;
    return a < b;
  }
  if (na != nb) return static_cast<bool>(na);  // numbers sort before labels
  return a < b;
}

int Trajectory::observed_stages() const {
  int count = 0;
  for (const auto& s : stages) count += s.degenerate ? 0 : 1;
  return count;
}

double Trajectory::utility() const {
  double u = terminal_reward;
  for (const auto& s : stages) u += s.reward;
  return u;
}

namespace {

bool is_reserved_name(const std::string& name) {
  if (name == "A" || name == "id" || name == "stage") return true;
  if (name.size() > 2 && name.rfind("A_", 0) == 0) {
    return std::all_of(name.begin() + 2, name.end(), [](char c) { return c >= '0' && c <= '9'; });
  }
  return false;
}

void check_cell_kind(const Cell& cell, const VariableInfo& info, const std::string& where) {
  if (is_missing(cell)) return;
  if (info.kind == ColumnKind::Numeric) {
    if (!std::holds_alternative<double>(cell)) {
      throw SchemaError("variable '" + info.name + "' is numeric but holds a label" + where);
    }
  } else {
    if (!std::holds_alternative<std::string>(cell)) {
      throw SchemaError("variable '" + info.name + "' is categorical but holds a number" + where);
    }
    const auto& label = std::get<std::string>(cell);
    if (std::find(info.levels.begin(), info.levels.end(), label) == info.levels.end()) {
      throw DomainError("level '" + label + "' not declared for '" + info.name + "'" + where);
    }
  }
}

std::vector<std::string> sorted_unique(std::set<std::string> values) {
  std::vector<std::string> out(values.begin(), values.end());
  std::sort(out.begin(), out.end(), natural_less);
  return out;
}

}  // namespace

PolicyData::PolicyData(std::vector<Trajectory> trajectories, std::vector<std::string> action_set,
                       std::vector<VariableInfo> state_variables, std::vector<VariableInfo> baseline_variables,
                       std::vector<std::vector<std::string>> stage_covariates, bool augmented)
    : trajectories_(std::move(trajectories)),
      action_set_(std::move(action_set)),
      state_variables_(std::move(state_variables)),
      baseline_variables_(std::move(baseline_variables)),
      stage_covariates_(std::move(stage_covariates)),
      augmented_(augmented) {
  if (trajectories_.empty()) throw StructureError("policy data needs at least one trajectory");
  if (action_set_.empty()) throw DomainError("empty action set");
  {
    std::set<std::string> seen;
    for (const auto& a : action_set_) {
      if (!seen.insert(a).second) throw DomainError("duplicate action label '" + a + "'");
    }
  }
  std::set<std::string> names;
  for (const auto* vars : {&state_variables_, &baseline_variables_}) {
    for (const auto& v : *vars) {
      if (is_reserved_name(v.name)) throw SchemaError("variable name '" + v.name + "' is reserved");
      if (!names.insert(v.name).second) throw SchemaError("duplicate variable name '" + v.name + "'");
    }
  }

  std::stable_sort(trajectories_.begin(), trajectories_.end(),
                   [](const Trajectory& a, const Trajectory& b) { return natural_less(a.id, b.id); });
  for (std::size_t i = 1; i < trajectories_.size(); ++i) {
    if (trajectories_[i].id == trajectories_[i - 1].id) {
      throw KeyError("duplicate id '" + trajectories_[i].id + "'");
    }
  }

  for (const auto& t : trajectories_) {
    const std::string where = " (id " + t.id + ")";
    if (t.stages.empty()) throw StructureError("trajectory without stages" + where);
    bool seen_degenerate = false;
    for (std::size_t k = 0; k < t.stages.size(); ++k) {
      const auto& s = t.stages[k];
      if (s.stage != static_cast<int>(k) + 1) throw StructureError("non-contiguous stage numbering" + where);
      if (action_index(s.action) < 0) throw DomainError("action '" + s.action + "' outside the action set" + where);
      if (!std::isfinite(s.reward)) throw ValueError("non-finite reward" + where);
      if (s.degenerate) {
        seen_degenerate = true;
        if (s.reward != 0.0 || !s.state.empty()) throw StructureError("degenerate stage carries data" + where);
      } else if (seen_degenerate) {
        throw StructureError("observed stage after a degenerate stage" + where);
      }
      for (const auto& [name, cell] : s.state) {
        auto it = std::find_if(state_variables_.begin(), state_variables_.end(),
                               [&](const VariableInfo& v) { return v.name == name; });
        if (it == state_variables_.end()) throw SchemaError("undeclared state variable '" + name + "'" + where);
        check_cell_kind(cell, *it, where);
      }
    }
    if (!std::isfinite(t.terminal_reward)) throw ValueError("non-finite terminal reward" + where);
    if (!std::isfinite(t.utility())) throw ValueError("non-finite utility" + where);
    for (const auto& [name, cell] : t.baseline) {
      auto it = std::find_if(baseline_variables_.begin(), baseline_variables_.end(),
                             [&](const VariableInfo& v) { return v.name == name; });
      if (it == baseline_variables_.end()) throw SchemaError("undeclared baseline variable '" + name + "'" + where);
      check_cell_kind(cell, *it, where);
    }
    max_stages_ = std::max(max_stages_, t.num_stages());
  }
  if (augmented_ && !uniform_stages()) throw StructureError("augmented data must have a uniform stage count");

  stage_action_sets_.assign(max_stages_, {});
  for (int k = 0; k < max_stages_; ++k) {
    std::vector<char> present(action_set_.size(), 0);
    for (const auto& t : trajectories_) {
      if (k < t.num_stages() && !t.stages[k].degenerate) present[action_index(t.stages[k].action)] = 1;
    }
    for (std::size_t a = 0; a < action_set_.size(); ++a) {
      if (present[a]) stage_action_sets_[k].push_back(action_set_[a]);
    }
  }
  if (stage_covariates_.size() < static_cast<std::size_t>(max_stages_)) {
    stage_covariates_.resize(max_stages_);
  }
}

std::vector<std::string> PolicyData::ids() const {
  std::vector<std::string> out;
  out.reserve(trajectories_.size());
  for (const auto& t : trajectories_) out.push_back(t.id);
  return out;
}

const std::vector<std::string>& PolicyData::stage_action_set(int k) const {
  if (k < 1 || k > max_stages_) throw RangeError("stage " + std::to_string(k) + " out of range");
  return stage_action_sets_[k - 1];
}

int PolicyData::action_index(const std::string& label) const {
  for (std::size_t a = 0; a < action_set_.size(); ++a) {
    if (action_set_[a] == label) return static_cast<int>(a);
  }
  return -1;
}

bool PolicyData::uniform_stages() const {
  for (const auto& t : trajectories_) {
    if (t.num_stages() != max_stages_) return false;
  }
  return true;
}

const VariableInfo* PolicyData::find_variable(const std::string& name) const {
  for (const auto* vars : {&state_variables_, &baseline_variables_}) {
    for (const auto& v : *vars) {
      if (v.name == name) return &v;
    }
  }
  return nullptr;
}

std::vector<std::map<std::string, std::size_t>> PolicyData::action_counts() const {
  std::vector<std::map<std::string, std::size_t>> counts(max_stages_);
  for (const auto& t : trajectories_) {
    for (const auto& s : t.stages) {
      if (!s.degenerate) ++counts[s.stage - 1][s.action];
    }
  }
  return counts;
}

PolicyData PolicyData::subset(const std::vector<std::size_t>& subjects) const {
  std::vector<Trajectory> picked;
  picked.reserve(subjects.size());
  for (std::size_t i : subjects) picked.push_back(trajectories_.at(i));
  return PolicyData(std::move(picked), action_set_, state_variables_, baseline_variables_, stage_covariates_,
                    augmented_);
}

bool PolicyData::operator==(const PolicyData& other) const {
  return trajectories_ == other.trajectories_ && action_set_ == other.action_set_ &&
         state_variables_ == other.state_variables_ && baseline_variables_ == other.baseline_variables_ &&
         augmented_ == other.augmented_;
}

// ---------------------------------------------------------------------------
// Ingestion

namespace {

// Chooses numeric when every non-missing cell parses as a number.
VariableInfo infer_variable(const std::string& name, const std::vector<const std::string*>& cells) {
  VariableInfo info{name, ColumnKind::Numeric, {}};
  std::set<std::string> labels;
  for (const auto* c : cells) {
    if (!c || is_missing_cell(*c)) continue;
    labels.insert(*c);
    if (!parse_number(*c)) info.kind = ColumnKind::Categorical;
  }
  if (info.kind == ColumnKind::Categorical) info.levels = sorted_unique(std::move(labels));
  return info;
}

Cell make_cell(const std::string* raw, const VariableInfo& info) {
  if (!raw || is_missing_cell(*raw)) return std::monostate{};
  if (info.kind == ColumnKind::Numeric) return *parse_number(*raw);
  return *raw;
}

double parse_reward(const std::string& raw, const std::string& col, std::size_t row) {
  auto v = parse_number(raw);
  if (!v || !std::isfinite(*v)) {
    throw ValueError("non-finite utility '" + raw + "' in column '" + col + "' row " + std::to_string(row + 1));
  }
  return *v;
}

std::vector<std::string> resolve_action_set(const std::optional<std::vector<std::string>>& declared,
                                            const std::set<std::string>& observed) {
  if (!declared) return sorted_unique(observed);
  for (const auto& a : observed) {
    if (std::find(declared->begin(), declared->end(), a) == declared->end()) {
      throw DomainError("action label '" + a + "' outside the declared action set");
    }
  }
  return *declared;
}

}  // namespace

PolicyData ingest_wide(const Table& table, const WideSpec& spec) {
  const std::size_t K = spec.action_cols.size();
  if (K == 0) throw ConfigError("at least one action column is required");
  if (spec.utility_cols.size() != 1 && spec.utility_cols.size() != K + 1) {
    throw ConfigError("utility columns must number 1 or K+1 = " + std::to_string(K + 1));
  }
  std::vector<std::size_t> action_idx, utility_idx, baseline_idx;
  for (const auto& c : spec.action_cols) action_idx.push_back(table.index_of(c));
  for (const auto& c : spec.utility_cols) utility_idx.push_back(table.index_of(c));
  for (const auto& c : spec.baseline_cols) baseline_idx.push_back(table.index_of(c));
  std::vector<std::vector<std::optional<std::size_t>>> cov_idx;
  for (const auto& [name, cols] : spec.covariates) {
    if (cols.size() != K) {
      throw ConfigError("covariate '" + name + "' lists " + std::to_string(cols.size()) + " columns, expected " +
                        std::to_string(K));
    }
    std::vector<std::optional<std::size_t>> idx;
    for (const auto& c : cols) idx.push_back(c ? std::optional(table.index_of(*c)) : std::nullopt);
    cov_idx.push_back(std::move(idx));
  }
  std::optional<std::size_t> id_idx;
  if (spec.id_col) id_idx = table.index_of(*spec.id_col);

  const auto& rows = table.rows;
  std::vector<VariableInfo> state_vars, baseline_vars;
  std::vector<std::vector<std::string>> stage_covariates(K);
  for (std::size_t v = 0; v < spec.covariates.size(); ++v) {
    std::vector<const std::string*> cells;
    for (const auto& row : rows) {
      for (std::size_t k = 0; k < K; ++k) {
        if (cov_idx[v][k]) cells.push_back(&row[*cov_idx[v][k]]);
      }
    }
    state_vars.push_back(infer_variable(spec.covariates[v].first, cells));
    for (std::size_t k = 0; k < K; ++k) {
      if (cov_idx[v][k]) stage_covariates[k].push_back(spec.covariates[v].first);
    }
  }
  for (std::size_t b = 0; b < baseline_idx.size(); ++b) {
    std::vector<const std::string*> cells;
    for (const auto& row : rows) cells.push_back(&row[baseline_idx[b]]);
    baseline_vars.push_back(infer_variable(spec.baseline_cols[b], cells));
  }

  std::set<std::string> observed_actions;
  std::vector<Trajectory> trajectories;
  trajectories.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    Trajectory t;
    t.id = id_idx ? row[*id_idx] : std::to_string(r + 1);
    for (std::size_t b = 0; b < baseline_idx.size(); ++b) {
      t.baseline[spec.baseline_cols[b]] = make_cell(&row[baseline_idx[b]], baseline_vars[b]);
    }
    for (std::size_t k = 0; k < K; ++k) {
      StageRecord s;
      s.stage = static_cast<int>(k) + 1;
      const std::string& a = row[action_idx[k]];
      if (is_missing_cell(a)) {
        throw ValueError("missing action in column '" + spec.action_cols[k] + "' row " + std::to_string(r + 1));
      }
      s.action = a;
      observed_actions.insert(a);
      for (std::size_t v = 0; v < spec.covariates.size(); ++v) {
        const std::string* raw = cov_idx[v][k] ? &row[*cov_idx[v][k]] : nullptr;
        s.state[spec.covariates[v].first] = make_cell(raw, state_vars[v]);
      }
      if (utility_idx.size() == K + 1) s.reward = parse_reward(row[utility_idx[k]], spec.utility_cols[k], r);
      t.stages.push_back(std::move(s));
    }
    t.terminal_reward = parse_reward(row[utility_idx.back()], spec.utility_cols.back(), r);
    trajectories.push_back(std::move(t));
  }
  auto actions = resolve_action_set(spec.action_set, observed_actions);
  return PolicyData(std::move(trajectories), std::move(actions), std::move(state_vars), std::move(baseline_vars),
                    std::move(stage_covariates));
}

PolicyData ingest_long(const Table& stage_table, const std::optional<Table>& baseline_table, const LongSpec& spec) {
  const std::size_t id_i = stage_table.index_of(spec.id_col);
  const std::size_t stage_i = stage_table.index_of(spec.stage_col);
  const std::size_t event_i = stage_table.index_of(spec.event_col);
  const std::size_t action_i = stage_table.index_of(spec.action_col);
  const std::size_t reward_i = stage_table.index_of(spec.reward_col);
  std::vector<std::size_t> cov_i;
  for (const auto& c : spec.covariates) cov_i.push_back(stage_table.index_of(c));

  std::vector<VariableInfo> state_vars;
  for (std::size_t v = 0; v < cov_i.size(); ++v) {
    std::vector<const std::string*> cells;
    for (const auto& row : stage_table.rows) cells.push_back(&row[cov_i[v]]);
    state_vars.push_back(infer_variable(spec.covariates[v], cells));
  }

  // Group rows by id, then order by stage.
  std::map<std::string, std::vector<std::pair<int, const std::vector<std::string>*>>> groups;
  for (std::size_t r = 0; r < stage_table.rows.size(); ++r) {
    const auto& row = stage_table.rows[r];
    auto st = parse_number(row[stage_i]);
    if (!st || *st != std::floor(*st) || *st < 1) {
      throw StructureError("invalid stage '" + row[stage_i] + "' at row " + std::to_string(r + 1));
    }
    groups[row[id_i]].emplace_back(static_cast<int>(*st), &row);
  }

  std::map<std::string, const std::vector<std::string>*> baseline_rows;
  std::vector<VariableInfo> baseline_vars;
  std::vector<std::size_t> base_i;
  if (baseline_table) {
    const std::size_t bid = baseline_table->index_of(spec.id_col);
    for (const auto& c : spec.baseline_cols) base_i.push_back(baseline_table->index_of(c));
    for (const auto& row : baseline_table->rows) {
      if (!baseline_rows.emplace(row[bid], &row).second) throw KeyError("duplicate baseline id '" + row[bid] + "'");
    }
    for (std::size_t b = 0; b < base_i.size(); ++b) {
      std::vector<const std::string*> cells;
      for (const auto& row : baseline_table->rows) cells.push_back(&row[base_i[b]]);
      baseline_vars.push_back(infer_variable(spec.baseline_cols[b], cells));
    }
  } else if (!spec.baseline_cols.empty()) {
    throw ConfigError("baseline columns given without a baseline table");
  }

  std::set<std::string> observed_actions;
  std::vector<Trajectory> trajectories;
  std::size_t max_k = 0;
  for (auto& [id, rows] : groups) {
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t j = 1; j < rows.size(); ++j) {
      if (rows[j].first == rows[j - 1].first) {
        throw KeyError("duplicate (id, stage) = (" + id + ", " + std::to_string(rows[j].first) + ")");
      }
    }
    for (std::size_t j = 0; j < rows.size(); ++j) {
      if (rows[j].first != static_cast<int>(j) + 1) throw StructureError("non-contiguous stages for id " + id);
    }
    const auto& last = *rows.back().second;
    if (parse_number(last[event_i]) != 1.0) throw StructureError("missing terminal row (event = 1) for id " + id);
    if (rows.size() < 2) throw StructureError("id " + id + " has no decision rows");
    Trajectory t;
    t.id = id;
    for (std::size_t j = 0; j + 1 < rows.size(); ++j) {
      const auto& row = *rows[j].second;
      if (parse_number(row[event_i]) != 0.0) {
        throw StructureError("event must be 0 on decision rows (id " + id + ", stage " +
                             std::to_string(j + 1) + ")");
      }
      StageRecord s;
      s.stage = static_cast<int>(j) + 1;
      if (is_missing_cell(row[action_i])) throw ValueError("missing action for id " + id);
      s.action = row[action_i];
      observed_actions.insert(s.action);
      for (std::size_t v = 0; v < cov_i.size(); ++v) s.state[spec.covariates[v]] = make_cell(&row[cov_i[v]], state_vars[v]);
      s.reward = parse_reward(row[reward_i], spec.reward_col, j);
      t.stages.push_back(std::move(s));
    }
    t.terminal_reward = parse_reward(last[reward_i], spec.reward_col, rows.size() - 1);
    if (baseline_table) {
      auto it = baseline_rows.find(id);
      if (it == baseline_rows.end()) throw KeyError("id '" + id + "' missing from the baseline table");
      for (std::size_t b = 0; b < base_i.size(); ++b) {
        t.baseline[spec.baseline_cols[b]] = make_cell(&(*it->second)[base_i[b]], baseline_vars[b]);
      }
    }
    max_k = std::max(max_k, t.stages.size());
    trajectories.push_back(std::move(t));
  }
  if (trajectories.empty()) throw StructureError("empty stage table");
  std::vector<std::vector<std::string>> stage_covariates(max_k, spec.covariates);
  auto actions = resolve_action_set(spec.action_set, observed_actions);
  return PolicyData(std::move(trajectories), std::move(actions), std::move(state_vars), std::move(baseline_vars),
                    std::move(stage_covariates));
}

PolicyData augment_stages(const PolicyData& pd, const std::string& default_action) {
  if (pd.augmented()) throw ConfigError("policy data is already augmented");
  if (pd.action_index(default_action) < 0) {
    throw DomainError("default action '" + default_action + "' is not in the action set");
  }
  const int K = pd.max_stages();
  std::vector<Trajectory> out = pd.trajectories();
  for (auto& t : out) {
    for (int k = t.num_stages() + 1; k <= K; ++k) {
      StageRecord s;
      s.stage = k;
      s.action = default_action;
      s.degenerate = true;
      t.stages.push_back(std::move(s));
    }
  }
  return PolicyData(std::move(out), pd.action_set(), pd.state_variables(), pd.baseline_variables(),
                    pd.stage_covariates(), true);
}

PolicyData partial(const PolicyData& pd, int last_stage) {
  if (last_stage < 1 || last_stage >= pd.max_stages()) {
    throw RangeError("partial stage " + std::to_string(last_stage) + " must lie in [1, " +
                     std::to_string(pd.max_stages() - 1) + "]");
  }
  std::vector<Trajectory> out = pd.trajectories();
  for (auto& t : out) {
    while (t.num_stages() > last_stage) {
      t.terminal_reward += t.stages.back().reward;
      t.stages.pop_back();
    }
  }
  auto covs = pd.stage_covariates();
  covs.resize(last_stage);
  return PolicyData(std::move(out), pd.action_set(), pd.state_variables(), pd.baseline_variables(), std::move(covs),
                    pd.augmented());
}

std::vector<std::pair<std::string, double>> utility(const PolicyData& pd) {
  std::vector<std::pair<std::string, double>> out;
  out.reserve(pd.size());
  for (const auto& t : pd.trajectories()) out.emplace_back(t.id, t.utility());
  return out;
}

// ---------------------------------------------------------------------------
// Histories

bool HistoryColumn::any_missing() const {
  return std::any_of(missing.begin(), missing.end(), [](char m) { return m != 0; });
}

const HistoryColumn* HistoryTable::find(const std::string& name) const {
  for (const auto& c : columns) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

const HistoryColumn& HistoryTable::column(const std::string& name) const {
  if (const auto* c = find(name)) return *c;
  throw SchemaError("history has no column '" + name + "'");
}

std::vector<std::string> HistoryTable::names() const {
  std::vector<std::string> out;
  for (const auto& c : columns) out.push_back(c.name);
  return out;
}

HistoryTable HistoryTable::subset(const std::vector<std::size_t>& rows) const {
  HistoryTable out;
  out.kind = kind;
  out.stage = stage;
  for (std::size_t r : rows) {
    out.ids.push_back(ids.at(r));
    out.stages.push_back(stages[r]);
    out.subjects.push_back(subjects[r]);
    out.actions.push_back(actions[r]);
  }
  for (const auto& c : columns) {
    HistoryColumn nc;
    nc.name = c.name;
    nc.kind = c.kind;
    nc.levels = c.levels;
    for (std::size_t r : rows) {
      nc.missing.push_back(c.missing[r]);
      if (c.kind == ColumnKind::Numeric) {
        nc.numeric.push_back(c.numeric[r]);
      } else {
        nc.labels.push_back(c.labels[r]);
      }
    }
    out.columns.push_back(std::move(nc));
  }
  return out;
}

HistoryColumn numeric_column(std::string name, std::vector<double> values) {
  HistoryColumn c;
  c.name = std::move(name);
  c.kind = ColumnKind::Numeric;
  c.missing.resize(values.size(), 0);
  for (std::size_t i = 0; i < values.size(); ++i) c.missing[i] = std::isnan(values[i]) ? 1 : 0;
  c.numeric = std::move(values);
  return c;
}

HistoryColumn categorical_column(std::string name, std::vector<std::string> values, std::vector<std::string> levels) {
  HistoryColumn c;
  c.name = std::move(name);
  c.kind = ColumnKind::Categorical;
  if (levels.empty()) {
    levels = sorted_unique(std::set<std::string>(values.begin(), values.end()));
    levels.erase(std::remove_if(levels.begin(), levels.end(), is_missing_cell), levels.end());
  }
  c.levels = std::move(levels);
  for (const auto& v : values) c.missing.push_back(is_missing_cell(v) ? 1 : 0);
  c.labels = std::move(values);
  return c;
}

HistoryTable HistoryTable::from_columns(std::vector<HistoryColumn> columns, HistoryKind kind, int stage) {
  HistoryTable h;
  h.kind = kind;
  h.stage = stage;
  const std::size_t n = columns.empty() ? 0
                        : columns.front().kind == ColumnKind::Numeric ? columns.front().numeric.size()
                                                                       : columns.front().labels.size();
  for (const auto& c : columns) {
    if (c.missing.size() != n) throw SchemaError("ad-hoc history columns differ in length");
  }
  for (std::size_t i = 0; i < n; ++i) {
    h.ids.push_back(std::to_string(i + 1));
    h.stages.push_back(stage);
    h.subjects.push_back(i);
    h.actions.emplace_back();
  }
  h.columns = std::move(columns);
  return h;
}

namespace {

struct ColumnBuilder {
  HistoryColumn col;

  ColumnBuilder(std::string name, const VariableInfo& info) {
    col.name = std::move(name);
    col.kind = info.kind;
    col.levels = info.levels;
  }
  ColumnBuilder(std::string name, std::vector<std::string> levels) {
    col.name = std::move(name);
    col.kind = ColumnKind::Categorical;
    col.levels = std::move(levels);
  }

  void push(const Cell* cell) {
    const bool miss = !cell || is_missing(*cell);
    col.missing.push_back(miss ? 1 : 0);
    if (col.kind == ColumnKind::Numeric) {
      col.numeric.push_back(miss ? std::numeric_limits<double>::quiet_NaN() : std::get<double>(*cell));
    } else {
      col.labels.push_back(miss ? std::string() : std::get<std::string>(*cell));
    }
  }
  void push_label(const std::string& label) {
    col.missing.push_back(0);
    col.labels.push_back(label);
  }
};

const Cell* lookup(const std::map<std::string, Cell>& m, const std::string& name) {
  auto it = m.find(name);
  return it == m.end() ? nullptr : &it->second;
}

}  // namespace

std::vector<std::string> history_names(const PolicyData& pd, int stage, HistoryKind kind) {
  std::vector<std::string> names;
  if (kind == HistoryKind::Full) {
    for (int j = 1; j < stage; ++j) names.push_back("A_" + std::to_string(j));
    for (const auto& v : pd.state_variables()) {
      for (int j = 1; j <= stage; ++j) names.push_back(v.name + "_" + std::to_string(j));
    }
  } else {
    for (const auto& v : pd.state_variables()) names.push_back(v.name);
  }
  for (const auto& v : pd.baseline_variables()) names.push_back(v.name);
  return names;
}

HistoryTable get_history(const PolicyData& pd, std::optional<int> stage, HistoryKind kind) {
  const int K = pd.max_stages();
  if (stage && (*stage < 1 || *stage > K)) {
    throw RangeError("stage " + std::to_string(*stage) + " out of range [1, " + std::to_string(K) + "]");
  }
  if (!stage && kind == HistoryKind::Full) {
    throw UnsupportedError("full histories are stage specific; pooling requires state histories");
  }
  HistoryTable h;
  h.kind = kind;
  h.stage = stage;

  std::vector<ColumnBuilder> builders;
  if (kind == HistoryKind::Full) {
    const int k = *stage;
    for (int j = 1; j < k; ++j) builders.emplace_back("A_" + std::to_string(j), pd.stage_action_set(j));
    for (const auto& v : pd.state_variables()) {
      for (int j = 1; j <= k; ++j) builders.emplace_back(v.name + "_" + std::to_string(j), v);
    }
  } else {
    for (const auto& v : pd.state_variables()) builders.emplace_back(v.name, v);
  }
  for (const auto& v : pd.baseline_variables()) builders.emplace_back(v.name, v);

  const auto& trajs = pd.trajectories();
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const auto& t = trajs[i];
    const int first = stage ? *stage : 1;
    const int last = stage ? *stage : t.num_stages();
    for (int k = first; k <= last; ++k) {
      if (k > t.num_stages() || t.stages[k - 1].degenerate) continue;
      h.ids.push_back(t.id);
      h.stages.push_back(k);
      h.subjects.push_back(i);
      h.actions.push_back(t.stages[k - 1].action);
      std::size_t b = 0;
      if (kind == HistoryKind::Full) {
        for (int j = 1; j < k; ++j) builders[b++].push_label(t.stages[j - 1].action);
        for (const auto& v : pd.state_variables()) {
          for (int j = 1; j <= k; ++j) builders[b++].push(lookup(t.stages[j - 1].state, v.name));
        }
      } else {
        for (const auto& v : pd.state_variables()) builders[b++].push(lookup(t.stages[k - 1].state, v.name));
      }
      for (const auto& v : pd.baseline_variables()) builders[b++].push(lookup(t.baseline, v.name));
    }
  }
  for (auto& b : builders) h.columns.push_back(std::move(b.col));
  return h;
}

}  // namespace dtr
