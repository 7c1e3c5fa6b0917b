#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dtr {

// A header-plus-rows table of raw string cells (RFC-4180 CSV).
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t num_rows() const { return rows.size(); }
  std::optional<std::size_t> find(const std::string& name) const;
  // Throws SchemaError for an unknown column.
  std::size_t index_of(const std::string& name) const;
  std::vector<std::string> column(const std::string& name) const;
  void add_column(const std::string& name, std::vector<std::string> values);
};

Table parse_csv(std::istream& in);
Table read_csv(const std::string& path);
void write_csv(std::ostream& out, const Table& table);
void write_csv(const std::string& path, const Table& table);

// Empty cells and "NA" are missing.
bool is_missing_cell(const std::string& cell);
std::optional<double> parse_number(const std::string& cell);
// Shortest representation that reads back to the same double.
std::string format_number(double value);

}  // namespace dtr
