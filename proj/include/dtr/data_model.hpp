#pragma once

#include "dtr/csv.hpp"

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace dtr {

// A covariate value: missing, numeric, or a categorical label.
using Cell = std::variant<std::monostate, double, std::string>;

inline bool is_missing(const Cell& c) { return std::holds_alternative<std::monostate>(c); }

enum class ColumnKind { Numeric, Categorical };
enum class HistoryKind { Full, State };

std::string to_string(HistoryKind kind);
HistoryKind parse_history_kind(const std::string& text);

// Numeric-aware ordering used for ids, action labels and categorical levels.
bool natural_less(const std::string& a, const std::string& b);

struct StageRecord {
  int stage = 1;
  std::map<std::string, Cell> state;
  double reward = 0.0;
  std::string action;
  bool degenerate = false;

  bool operator==(const StageRecord&) const = default;
};

struct Trajectory {
  std::string id;
  std::map<std::string, Cell> baseline;
  std::vector<StageRecord> stages;
  double terminal_reward = 0.0;

  int num_stages() const { return static_cast<int>(stages.size()); }
  // Number of non-degenerate stages (K*).
  int observed_stages() const;
  double utility() const;

  bool operator==(const Trajectory&) const = default;
};

struct VariableInfo {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
  std::vector<std::string> levels;  // categorical only, natural order

  bool operator==(const VariableInfo&) const = default;
};

// Immutable staged data set. Trajectories are kept in canonical id order.
class PolicyData {
 public:
  PolicyData(std::vector<Trajectory> trajectories, std::vector<std::string> action_set,
             std::vector<VariableInfo> state_variables, std::vector<VariableInfo> baseline_variables,
             std::vector<std::vector<std::string>> stage_covariates, bool augmented = false);

  std::size_t size() const { return trajectories_.size(); }
  const Trajectory& operator[](std::size_t i) const { return trajectories_[i]; }
  const std::vector<Trajectory>& trajectories() const { return trajectories_; }
  std::vector<std::string> ids() const;

  const std::vector<std::string>& action_set() const { return action_set_; }
  // Observed actions at non-degenerate records of stage k (1-based), natural order.
  const std::vector<std::string>& stage_action_set(int k) const;
  int action_index(const std::string& label) const;

  int max_stages() const { return max_stages_; }
  bool uniform_stages() const;
  bool augmented() const { return augmented_; }

  const std::vector<VariableInfo>& state_variables() const { return state_variables_; }
  const std::vector<VariableInfo>& baseline_variables() const { return baseline_variables_; }
  const VariableInfo* find_variable(const std::string& name) const;
  const std::vector<std::vector<std::string>>& stage_covariates() const { return stage_covariates_; }

  // Action counts per stage, keyed by label.
  std::vector<std::map<std::string, std::size_t>> action_counts() const;

  PolicyData subset(const std::vector<std::size_t>& subjects) const;

  bool operator==(const PolicyData& other) const;

 private:
  std::vector<Trajectory> trajectories_;
  std::vector<std::string> action_set_;
  std::vector<std::vector<std::string>> stage_action_sets_;
  std::vector<VariableInfo> state_variables_;
  std::vector<VariableInfo> baseline_variables_;
  std::vector<std::vector<std::string>> stage_covariates_;
  int max_stages_ = 0;
  bool augmented_ = false;
};

// Wide layout: one row per subject.
struct WideSpec {
  std::vector<std::string> action_cols;
  // State covariate name -> per-stage column (nullopt = not measured at that stage).
  std::vector<std::pair<std::string, std::vector<std::optional<std::string>>>> covariates;
  std::vector<std::string> utility_cols;  // 1 (final utility) or K + 1 (per-stage rewards)
  std::vector<std::string> baseline_cols;
  std::optional<std::string> id_col;
  std::optional<std::vector<std::string>> action_set;  // inferred when absent
};

// Long layout: K* + 1 rows per subject in the stage table.
struct LongSpec {
  std::string id_col = "id";
  std::string stage_col = "stage";
  std::string event_col = "event";
  std::string action_col = "A";
  std::string reward_col = "U";
  std::vector<std::string> covariates;
  std::vector<std::string> baseline_cols;
  std::optional<std::vector<std::string>> action_set;
};

PolicyData ingest_wide(const Table& table, const WideSpec& spec);
PolicyData ingest_long(const Table& stage_table, const std::optional<Table>& baseline_table,
                       const LongSpec& spec);

// Pads every trajectory to the maximal stage count with degenerate records.
PolicyData augment_stages(const PolicyData& pd, const std::string& default_action);

// Keeps stages 1..last_stage and folds later rewards into the terminal reward.
PolicyData partial(const PolicyData& pd, int last_stage);

std::vector<std::pair<std::string, double>> utility(const PolicyData& pd);

struct HistoryColumn {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
  std::vector<double> numeric;       // numeric columns (NaN where missing)
  std::vector<std::string> labels;   // categorical columns
  std::vector<std::string> levels;   // categorical level order
  std::vector<char> missing;

  bool any_missing() const;
};

// Histories keyed by (id, stage). Built over non-degenerate records only.
struct HistoryTable {
  std::vector<std::string> ids;
  std::vector<int> stages;
  std::vector<std::size_t> subjects;  // trajectory index into the source PolicyData
  std::vector<std::string> actions;   // observed action at (id, stage)
  std::vector<HistoryColumn> columns;
  HistoryKind kind = HistoryKind::State;
  std::optional<int> stage;  // nullopt when pooled across stages

  std::size_t rows() const { return ids.size(); }
  const HistoryColumn* find(const std::string& name) const;
  const HistoryColumn& column(const std::string& name) const;
  std::vector<std::string> names() const;
  HistoryTable subset(const std::vector<std::size_t>& rows) const;

  // Ad-hoc history rows, e.g. for evaluating a single stage rule on new data.
  static HistoryTable from_columns(std::vector<HistoryColumn> columns, HistoryKind kind, int stage);
};

HistoryColumn numeric_column(std::string name, std::vector<double> values);
HistoryColumn categorical_column(std::string name, std::vector<std::string> values,
                                 std::vector<std::string> levels = {});

// stage == nullopt pools all stages (state histories only).
HistoryTable get_history(const PolicyData& pd, std::optional<int> stage, HistoryKind kind);

// Column names of the stage-k history of the given kind.
std::vector<std::string> history_names(const PolicyData& pd, int stage, HistoryKind kind);

}  // namespace dtr
