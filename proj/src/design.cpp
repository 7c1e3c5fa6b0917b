#include "dtr/design.hpp"

#include "dtr/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace dtr {

namespace {

bool same_set(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.size() != b.size()) return false;
  for (const auto& v : a) {
    if (std::find(b.begin(), b.end(), v) == b.end()) return false;
  }
  return true;
}

Term term_union(const Term& a, const Term& b) {
  Term out = a;
  for (const auto& v : b.vars) {
    if (std::find(out.vars.begin(), out.vars.end(), v) == out.vars.end()) out.vars.push_back(v);
  }
  return out;
}

void add_unique(std::vector<Term>& list, const Term& t) {
  if (std::find(list.begin(), list.end(), t) == list.end()) list.push_back(t);
}

void erase_term(std::vector<Term>& list, const Term& t) {
  list.erase(std::remove(list.begin(), list.end(), t), list.end());
}

struct TermList {
  std::vector<Term> terms;
  bool zero = false;  // the literal "0"
};

class Parser {
 public:
  explicit Parser(const std::string& text) : text_(text) {}

  DesignSpec parse() {
    DesignSpec spec;
    spec.source_text = text_;
    skip_ws();
    if (!eat('~')) fail("expected '~'");
    skip_ws();
    if (pos_ == text_.size()) fail("empty right-hand side");
    bool negative = false;
    if (eat('-')) negative = true;
    apply(spec, prod(), negative);
    for (;;) {
      skip_ws();
      if (pos_ == text_.size()) break;
      if (eat('+')) {
        apply(spec, prod(), false);
      } else if (eat('-')) {
        apply(spec, prod(), true);
      } else {
        fail(std::string("unexpected token '") + text_[pos_] + "'");
      }
    }
    return spec;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw FormulaSyntaxError(msg + " at offset " + std::to_string(pos_) + " in '" + text_ + "'");
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  static void apply(DesignSpec& spec, const TermList& list, bool negative) {
    if (list.zero) {
      spec.intercept = false;
      return;
    }
    for (const auto& t : list.terms) {
      if (t.vars.empty()) {
        spec.intercept = !negative;
      } else if (negative) {
        erase_term(spec.terms, t);
        add_unique(spec.removed, t);
      } else {
        erase_term(spec.removed, t);
        add_unique(spec.terms, t);
      }
    }
  }

  // Additive expression inside parentheses.
  TermList expr() {
    TermList out;
    bool negative = eat('-');
    auto merge = [&](const TermList& l, bool neg) {
      if (l.zero) fail("'0' is only valid at the top level");
      for (const auto& t : l.terms) {
        if (neg) {
          erase_term(out.terms, t);
        } else {
          add_unique(out.terms, t);
        }
      }
    };
    merge(prod(), negative);
    for (;;) {
      if (eat('+')) {
        merge(prod(), false);
      } else if (eat('-')) {
        merge(prod(), true);
      } else {
        break;
      }
    }
    return out;
  }

  TermList prod() {
    TermList left = inter();
    while (eat('*')) {
      TermList right = inter();
      if (left.zero || right.zero) fail("'0' cannot be crossed");
      TermList out;
      for (const auto& t : left.terms) add_unique(out.terms, t);
      for (const auto& t : right.terms) add_unique(out.terms, t);
      for (const auto& a : left.terms) {
        for (const auto& b : right.terms) add_unique(out.terms, term_union(a, b));
      }
      left = std::move(out);
    }
    return left;
  }

  TermList inter() {
    TermList left = atom();
    while (eat(':')) {
      TermList right = atom();
      if (left.zero || right.zero) fail("'0' cannot be interacted");
      TermList out;
      for (const auto& a : left.terms) {
        for (const auto& b : right.terms) add_unique(out.terms, term_union(a, b));
      }
      left = std::move(out);
    }
    return left;
  }

  TermList atom() {
    skip_ws();
    if (pos_ == text_.size()) fail("unexpected end of formula");
    const char c = text_[pos_];
    TermList out;
    if (c == '(') {
      ++pos_;
      out = expr();
      if (!eat(')')) fail("expected ')'");
      return out;
    }
    if (c == '.' && (pos_ + 1 == text_.size() || !is_name_char(text_[pos_ + 1]))) {
      ++pos_;
      out.terms.push_back(Term{{"."}});
      return out;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      const std::string num = text_.substr(start, pos_ - start);
      if (num == "1") {
        out.terms.push_back(Term{});
      } else if (num == "0") {
        out.zero = true;
      } else {
        pos_ = start;
        fail("unknown numeric token '" + num + "'");
      }
      return out;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.') {
      const std::size_t start = pos_;
      while (pos_ < text_.size() && is_name_char(text_[pos_])) ++pos_;
      out.terms.push_back(Term{{text_.substr(start, pos_ - start)}});
      return out;
    }
    fail(std::string("unknown token '") + c + "'");
  }

  static bool is_name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  }

  const std::string& text_;
  std::size_t pos_ = 0;
};

}  // namespace

bool Term::operator==(const Term& other) const { return same_set(vars, other.vars); }

bool Term::has_dot() const { return std::find(vars.begin(), vars.end(), ".") != vars.end(); }

std::string Term::label() const {
  if (vars.empty()) return "1";
  std::string out;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    if (i) out += ':';
    out += vars[i];
  }
  return out;
}

DesignSpec parse_formula(const std::string& text) { return Parser(text).parse(); }

std::string print_formula(const DesignSpec& spec) {
  std::string out = spec.intercept ? "~1" : "~0";
  for (const auto& t : spec.terms) out += "+" + t.label();
  for (const auto& t : spec.removed) out += "-" + t.label();
  return out;
}

namespace {

std::vector<Term> expand_dots(const std::vector<Term>& terms, const std::vector<std::string>& columns) {
  std::vector<Term> out;
  for (const auto& t : terms) {
    std::vector<Term> partial{Term{}};
    for (const auto& v : t.vars) {
      std::vector<Term> next;
      if (v == ".") {
        for (const auto& p : partial) {
          for (const auto& c : columns) add_unique(next, term_union(p, Term{{c}}));
        }
      } else {
        for (const auto& p : partial) add_unique(next, term_union(p, Term{{v}}));
      }
      partial = std::move(next);
    }
    for (const auto& p : partial) {
      if (!p.vars.empty()) add_unique(out, p);
    }
  }
  return out;
}

}  // namespace

ResolvedTerms resolve(const DesignSpec& spec, const std::vector<std::string>& history_columns, bool has_action) {
  std::vector<std::string> dot_columns;
  for (const auto& c : history_columns) {
    if (c != kActionColumn) dot_columns.push_back(c);
  }
  ResolvedTerms out;
  out.intercept = spec.intercept;
  out.terms = expand_dots(spec.terms, dot_columns);
  for (const auto& t : expand_dots(spec.removed, dot_columns)) erase_term(out.terms, t);
  for (const auto& t : out.terms) {
    for (const auto& v : t.vars) {
      if (v == kActionColumn) {
        if (!has_action) throw SchemaError("formula references the action column '" + v + "' where it is unavailable");
        continue;
      }
      if (std::find(history_columns.begin(), history_columns.end(), v) == history_columns.end()) {
        throw SchemaError("formula variable '" + v + "' is not in the history");
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

DesignLayout DesignLayout::make(const DesignSpec& spec, const HistoryTable& h,
                                const std::vector<std::string>* action_levels, Coding coding) {
  const auto resolved = resolve(spec, h.names(), action_levels != nullptr);
  DesignLayout layout;
  layout.intercept_ = resolved.intercept;
  layout.terms_ = resolved.terms;
  layout.coding_ = coding;
  for (const auto& t : layout.terms_) {
    for (const auto& v : t.vars) {
      const bool seen = std::any_of(layout.variables_.begin(), layout.variables_.end(),
                                    [&](const VariableCoding& c) { return c.name == v; });
      if (seen) continue;
      if (v == kActionColumn) {
        layout.variables_.push_back({v, ColumnKind::Categorical, *action_levels});
      } else {
        const auto& col = h.column(v);
        layout.variables_.push_back({v, col.kind, col.levels});
      }
    }
  }
  layout.finalize();
  return layout;
}

const VariableCoding& DesignLayout::coding_of(const std::string& name) const {
  for (const auto& v : variables_) {
    if (v.name == name) return v;
  }
  throw SchemaError("design has no variable '" + name + "'");
}

void DesignLayout::finalize() {
  column_names_.clear();
  if (intercept_) column_names_.push_back("(Intercept)");
  for (const auto& t : terms_) {
    std::vector<std::string> names{""};
    for (const auto& v : t.vars) {
      const auto& c = coding_of(v);
      std::vector<std::string> parts;
      if (c.kind == ColumnKind::Numeric) {
        parts.push_back(v);
      } else {
        for (std::size_t l = coding_ == Coding::Treatment ? 1 : 0; l < c.levels.size(); ++l) {
          parts.push_back(v + c.levels[l]);
        }
      }
      // Earlier variables vary fastest.
      std::vector<std::string> next;
      for (const auto& p : parts) {
        for (const auto& n : names) next.push_back(n.empty() ? p : n + ":" + p);
      }
      names = std::move(next);
    }
    for (auto& n : names) column_names_.push_back(std::move(n));
  }
}

bool DesignLayout::uses_action() const {
  return std::any_of(variables_.begin(), variables_.end(),
                     [](const VariableCoding& v) { return v.name == kActionColumn; });
}

std::vector<std::string> DesignLayout::history_variables() const {
  std::vector<std::string> out;
  for (const auto& v : variables_) {
    if (v.name != kActionColumn) out.push_back(v.name);
  }
  return out;
}

Eigen::MatrixXd DesignLayout::build(const HistoryTable& h, const std::vector<std::string>* actions) const {
  const Eigen::Index n = static_cast<Eigen::Index>(h.rows());
  // Per-variable expansion blocks.
  std::vector<Eigen::MatrixXd> blocks;
  blocks.reserve(variables_.size());
  for (const auto& v : variables_) {
    const std::vector<std::string>* labels = nullptr;
    const HistoryColumn* col = nullptr;
    if (v.name == kActionColumn) {
      if (!actions) throw SchemaError("design uses the action column but no actions were supplied");
      if (actions->size() != h.rows()) throw SchemaError("action column length differs from the history");
      labels = actions;
    } else {
      col = &h.column(v.name);
      if (col->kind != v.kind) throw SchemaError("column '" + v.name + "' changed kind since the model was fit");
      if (col->any_missing()) {
        throw SchemaError("model references '" + v.name + "', which is missing at stage " +
                          (h.stage ? std::to_string(*h.stage) : std::string("(pooled)")));
      }
      if (v.kind == ColumnKind::Categorical) labels = &col->labels;
    }
    if (v.kind == ColumnKind::Numeric) {
      blocks.emplace_back(Eigen::Map<const Eigen::VectorXd>(col->numeric.data(), n));
      continue;
    }
    const std::size_t first = coding_ == Coding::Treatment ? 1 : 0;
    const Eigen::Index width = static_cast<Eigen::Index>(v.levels.size() > first ? v.levels.size() - first : 0);
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(n, width);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& lab = (*labels)[i];
      auto it = std::find(v.levels.begin(), v.levels.end(), lab);
      if (it == v.levels.end()) throw DomainError("level '" + lab + "' of '" + v.name + "' unseen when fitting");
      const auto l = static_cast<std::size_t>(it - v.levels.begin());
      if (l >= first) block(i, static_cast<Eigen::Index>(l - first)) = 1.0;
    }
    blocks.push_back(std::move(block));
  }

  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(column_names_.size()));
  Eigen::Index col = 0;
  if (intercept_) X.col(col++).setOnes();
  for (const auto& t : terms_) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Ones(n, 1);
    for (const auto& v : t.vars) {
      const auto idx = std::find_if(variables_.begin(), variables_.end(),
                                    [&](const VariableCoding& c) { return c.name == v; }) -
                       variables_.begin();
      const auto& b = blocks[static_cast<std::size_t>(idx)];
      Eigen::MatrixXd next(n, b.cols() * acc.cols());
      for (Eigen::Index p = 0; p < b.cols(); ++p) {
        for (Eigen::Index q = 0; q < acc.cols(); ++q) next.col(p * acc.cols() + q) = acc.col(q).cwiseProduct(b.col(p));
      }
      acc = std::move(next);
    }
    X.middleCols(col, acc.cols()) = acc;
    col += acc.cols();
  }
  return X;
}

nlohmann::json DesignLayout::to_json() const {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : terms_) terms.push_back(t.vars);
  nlohmann::json vars = nlohmann::json::array();
  for (const auto& v : variables_) {
    nlohmann::json jv{{"name", v.name}, {"kind", v.kind == ColumnKind::Numeric ? "numeric" : "categorical"}};
    if (v.kind == ColumnKind::Categorical) jv["levels"] = v.levels;
    vars.push_back(std::move(jv));
  }
  return {{"intercept", intercept_},
          {"terms", terms},
          {"variables", vars},
          {"coding", coding_ == Coding::Treatment ? "treatment" : "onehot"}};
}

DesignLayout DesignLayout::from_json(const nlohmann::json& j) {
  try {
    DesignLayout layout;
    layout.intercept_ = j.at("intercept").get<bool>();
    for (const auto& t : j.at("terms")) layout.terms_.push_back(Term{t.get<std::vector<std::string>>()});
    for (const auto& v : j.at("variables")) {
      VariableCoding c;
      c.name = v.at("name").get<std::string>();
      const auto kind = v.at("kind").get<std::string>();
      if (kind != "numeric" && kind != "categorical") throw FormatError("unknown variable kind '" + kind + "'");
      c.kind = kind == "numeric" ? ColumnKind::Numeric : ColumnKind::Categorical;
      if (c.kind == ColumnKind::Categorical) c.levels = v.at("levels").get<std::vector<std::string>>();
      layout.variables_.push_back(std::move(c));
    }
    const auto coding = j.value("coding", std::string("treatment"));
    if (coding != "treatment" && coding != "onehot") throw FormatError("unknown coding '" + coding + "'");
    layout.coding_ = coding == "treatment" ? Coding::Treatment : Coding::OneHot;
    layout.finalize();
    return layout;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed design layout: ") + e.what());
  }
}

DesignMatrix build_design(const DesignSpec& spec, const HistoryTable& h, const std::vector<std::string>* actions,
                          const std::vector<std::string>* action_levels) {
  std::vector<std::string> inferred;
  if (actions && !action_levels) {
    std::set<std::string> uniq(actions->begin(), actions->end());
    inferred.assign(uniq.begin(), uniq.end());
    std::sort(inferred.begin(), inferred.end(), natural_less);
    action_levels = &inferred;
  }
  const auto layout = DesignLayout::make(spec, h, actions ? action_levels : nullptr);
  DesignMatrix out;
  out.names = layout.column_names();
  out.X = layout.build(h, actions);
  out.ids = h.ids;
  out.stages = h.stages;
  return out;
}

}  // namespace dtr
