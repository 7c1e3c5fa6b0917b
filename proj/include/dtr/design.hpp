#pragma once

#include "dtr/data_model.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <string>
#include <vector>

namespace dtr {

// A model term: an interaction of variables ("." stands for every history
// column). Equality is set equality; the stored order only drives naming.
struct Term {
  std::vector<std::string> vars;

  bool operator==(const Term& other) const;
  bool has_dot() const;
  std::string label() const;  // "A:X", or "1" for the empty term
};

struct DesignSpec {
  bool intercept = true;
  std::vector<Term> terms;    // may contain "." placeholders
  std::vector<Term> removed;  // applied after "." expansion
  std::string source_text;

  bool operator==(const DesignSpec& other) const {
    return intercept == other.intercept && terms == other.terms && removed == other.removed;
  }
};

// Grammar: '~' expr; expr := prod (('+'|'-') prod)*; prod := inter ('*' inter)*;
// inter := atom (':' atom)*; atom := name | '.' | '1' | '0' | '(' expr ')'.
// A leading '-' is allowed ("~-1", "~.-x").
DesignSpec parse_formula(const std::string& text);
// Canonical form, e.g. "~1+A+X+A:X-B". parse_formula(print_formula(s)) == s.
std::string print_formula(const DesignSpec& spec);

// The synthetic action column available to Q-model designs.
inline const std::string kActionColumn = "A";

struct ResolvedTerms {
  bool intercept = true;
  std::vector<Term> terms;
};

// Expands "." against the available history columns (never the action column)
// and applies removals. Unknown names raise SchemaError.
ResolvedTerms resolve(const DesignSpec& spec, const std::vector<std::string>& history_columns, bool has_action);

enum class Coding {
  Treatment,  // indicator per non-reference level, first level is the reference
  OneHot,     // indicator per level
};

struct VariableCoding {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
  std::vector<std::string> levels;
};

// Frozen design: resolved terms plus per-variable codings, so the same columns
// can be rebuilt on new history rows.
class DesignLayout {
 public:
  DesignLayout() = default;
  // action_levels: levels of the synthetic action column when the design may use it.
  static DesignLayout make(const DesignSpec& spec, const HistoryTable& h,
                           const std::vector<std::string>* action_levels = nullptr,
                           Coding coding = Coding::Treatment);

  // actions: labels of the synthetic action column per row (required when uses_action()).
  Eigen::MatrixXd build(const HistoryTable& h, const std::vector<std::string>* actions = nullptr) const;

  const std::vector<std::string>& column_names() const { return column_names_; }
  std::size_t num_columns() const { return column_names_.size(); }
  bool intercept() const { return intercept_; }
  const std::vector<Term>& terms() const { return terms_; }
  const std::vector<VariableCoding>& variables() const { return variables_; }
  bool uses_action() const;
  // History columns the design reads (excludes the action column).
  std::vector<std::string> history_variables() const;

  nlohmann::json to_json() const;
  static DesignLayout from_json(const nlohmann::json& j);

 private:
  void finalize();
  const VariableCoding& coding_of(const std::string& name) const;

  bool intercept_ = true;
  std::vector<Term> terms_;
  std::vector<VariableCoding> variables_;
  Coding coding_ = Coding::Treatment;
  std::vector<std::string> column_names_;
};

struct DesignMatrix {
  std::vector<std::string> names;
  Eigen::MatrixXd X;
  std::vector<std::string> ids;
  std::vector<int> stages;
};

DesignMatrix build_design(const DesignSpec& spec, const HistoryTable& h,
                          const std::vector<std::string>* actions = nullptr,
                          const std::vector<std::string>* action_levels = nullptr);

}  // namespace dtr
