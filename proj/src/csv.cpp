#include "dtr/csv.hpp"

#include "dtr/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace dtr {

std::optional<std::size_t> Table::find(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == name) return j;
  }
  return std::nullopt;
}

std::size_t Table::index_of(const std::string& name) const {
  if (auto j = find(name)) return *j;
  throw SchemaError("unknown column '" + name + "'");
}

std::vector<std::string> Table::column(const std::string& name) const {
  const std::size_t j = index_of(name);
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (const auto& row : rows) out.push_back(row[j]);
  return out;
}

void Table::add_column(const std::string& name, std::vector<std::string> values) {
  if (values.size() != rows.size()) throw SchemaError("column '" + name + "' has wrong length");
  if (find(name)) throw SchemaError("duplicate column '" + name + "'");
  header.push_back(name);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].push_back(std::move(values[i]));
}

namespace {

// Reads one record; returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get(c);
      ++line;
      fields.push_back(std::move(field));
      return true;
    } else if (c == '\n') {
      ++line;
      fields.push_back(std::move(field));
      return true;
    } else {
      field.push_back(c);
    }
  }
  if (in_quotes) throw StructureError("unterminated quoted field near line " + std::to_string(line));
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

bool needs_quotes(const std::string& s) {
  return s.find_first_of(",\"\r\n") != std::string::npos;
}

}  // namespace

Table parse_csv(std::istream& in) {
  Table table;
  std::size_t line = 1;
  std::vector<std::string> fields;
  if (!read_record(in, fields, line)) throw StructureError("empty CSV input (header row required)");
  table.header = fields;
  while (read_record(in, fields, line)) {
    if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
    if (fields.size() != table.header.size()) {
      throw StructureError("CSV record with " + std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(table.header.size()) + " (line " + std::to_string(line - 1) + ")");
    }
    table.rows.push_back(fields);
  }
  return table;
}

Table read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  return parse_csv(in);
}

void write_csv(std::ostream& out, const Table& table) {
  auto emit = [&out](const std::vector<std::string>& rec) {
    for (std::size_t j = 0; j < rec.size(); ++j) {
      if (j) out << ',';
      if (needs_quotes(rec[j])) {
        out << '"';
        for (char c : rec[j]) {
          if (c == '"') out << '"';
          out << c;
        }
        out << '"';
      } else {
        out << rec[j];
      }
    }
    out << '\n';
  };
  emit(table.header);
  for (const auto& row : table.rows) emit(row);
}

void write_csv(const std::string& path, const Table& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  write_csv(out, table);
}

bool is_missing_cell(const std::string& cell) { return cell.empty() || cell == "NA"; }

std::optional<double> parse_number(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (*first == '+') ++first;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return value;
}

std::string format_number(double value) {
  if (std::isnan(value)) return "NA";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace dtr
