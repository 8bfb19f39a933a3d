#include "exnet/csv.hpp"

#include <istream>
#include <ostream>

#include "exnet/error.hpp"

namespace exnet {

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::string_view::npos;
}

std::size_t CsvTable::require_column(std::string_view name) const {
  const std::size_t i = column(name);
  if (i == std::string_view::npos) throw FormatError("CSV is missing required column '" + std::string(name) + "'");
  return i;
}

namespace {

// Parses one logical record starting at `line`; may consume further lines
// when a quoted field spans newlines.
bool read_record(std::istream& is, std::size_t& line_no, std::vector<std::string>& fields, std::size_t& start_line) {
  std::string line;
  fields.clear();
  while (true) {
    if (!std::getline(is, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) break;
  }
  start_line = line_no;
  std::string field;
  bool quoted = false;
  std::size_t i = 0;
  while (true) {
    if (i == line.size()) {
      if (quoted) {
        if (!std::getline(is, line)) throw FormatError("CSV line " + std::to_string(start_line) + ": unterminated quote");
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        field += '\n';
        i = 0;
        continue;
      }
      fields.push_back(std::move(field));
      return true;
    }
    const char c = line[i++];
    if (quoted) {
      if (c == '"') {
        if (i < line.size() && line[i] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      if (!field.empty()) throw FormatError("CSV line " + std::to_string(line_no) + ": stray quote");
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
}

}  // namespace

CsvTable read_csv(std::istream& is) {
  CsvTable table;
  std::size_t line_no = 0;
  std::size_t start = 0;
  std::vector<std::string> fields;
  if (!read_record(is, line_no, fields, start)) throw FormatError("CSV is empty (no header)");
  table.header = fields;
  while (read_record(is, line_no, fields, start)) {
    if (fields.size() != table.header.size()) {
      throw FormatError("CSV line " + std::to_string(start) + ": expected " + std::to_string(table.header.size()) +
                        " fields, found " + std::to_string(fields.size()));
    }
    table.rows.push_back({start, fields});
  }
  return table;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (const char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_csv_row(std::ostream& os, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) os << ',';
    os << csv_escape(fields[i]);
  }
  os << '\n';
}

}  // namespace exnet
