#ifndef VARMOD_CSV_HPP
#define VARMOD_CSV_HPP

#include <string>
#include <vector>

namespace varmod {

/// 17-significant-digit formatting; round-trips doubles exactly and keeps
/// the '.' decimal separator regardless of locale.
std::string fmt17(double value);

/// Parses a numeric field, reporting file/row context on failure.
double parse_double(const std::string& field, const std::string& file, std::size_t row);

/// Comma-separated table with a header row. No quoting: fields must not
/// contain commas (ids and numbers only).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  static CsvTable read(const std::string& path);

  /// Column position by header name; -1 when absent.
  int column(const std::string& name) const;
};

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

}  // namespace varmod

#endif
