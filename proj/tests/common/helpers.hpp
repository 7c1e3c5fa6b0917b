#pragma once

#include "dtr/csv.hpp"
#include "dtr/data_model.hpp"

#include <sstream>
#include <string>

namespace testing {

inline dtr::Table table_of(const std::string& csv) {
  std::istringstream in(csv);
  return dtr::parse_csv(in);
}

inline dtr::PolicyData wide_of(const std::string& csv, const dtr::WideSpec& spec) {
  return dtr::ingest_wide(table_of(csv), spec);
}

}  // namespace testing

namespace testing {

// Two-stage trial with the action counts of a published SMART example:
// stage 1 cct x112, lt x105; at stage 2 the 36 responders continue and the
// 181 non-responders split notext x86, text x95.
inline dtr::PolicyData smart_fixture() {
  std::string csv = "id,A1,resp,A2,U\n";
  for (int i = 0; i < 217; ++i) {
    const std::string a1 = i < 112 ? "cct" : "lt";
    std::string resp, a2;
    if (i % 6 == 0 && i / 6 < 36) {
      resp = "TRUE";
      a2 = "continue";
    } else {
      resp = "FALSE";
    }
    csv += std::to_string(i + 1) + "," + a1 + "," + resp + "," + a2 + "," + std::to_string(i % 5) + "\n";
  }
  auto table = table_of(csv);
  // Non-responders: first 86 get notext, the rest text.
  int nonresp = 0;
  for (auto& row : table.rows) {
    if (row[3].empty()) row[3] = nonresp++ < 86 ? "notext" : "text";
  }
  dtr::WideSpec spec;
  spec.action_cols = {"A1", "A2"};
  spec.covariates = {{"responder", {std::nullopt, "resp"}}};
  spec.utility_cols = {"U"};
  spec.id_col = "id";
  return dtr::ingest_wide(table, spec);
}

}  // namespace testing
