#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace exnet {

struct CsvRow {
  std::size_t line = 0;  // 1-based line number in the source
  std::vector<std::string> fields;
};

/// Minimal RFC 4180 reader: quoted fields, doubled quotes, CRLF. Blank lines
/// are skipped. Rows whose field count differs from the header throw
/// FormatError naming the line.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<CsvRow> rows;

  /// Index of a header column, or npos.
  [[nodiscard]] std::size_t column(std::string_view name) const;
  /// Index of a header column; throws FormatError when missing.
  [[nodiscard]] std::size_t require_column(std::string_view name) const;
};

CsvTable read_csv(std::istream& is);

std::string csv_escape(std::string_view field);
void write_csv_row(std::ostream& os, const std::vector<std::string>& fields);

}  // namespace exnet
