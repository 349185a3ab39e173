#ifndef THERMOPOOL_CSV_HPP
#define THERMOPOOL_CSV_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace thermopool {

/// A header-keyed CSV file held in memory. Fields are not unquoted; the
/// formats read by this project never contain embedded commas.
struct CsvTable {
  std::filesystem::path source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;

  /// Index of a named column; throws MissingColumn.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
  std::string where(std::size_t row) const;
};

CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(std::istream& in, const std::filesystem::path& source);

double parse_double(std::string_view text, const std::string& where);
std::int64_t parse_int(std::string_view text, const std::string& where);

/// Shortest representation that round-trips exactly; "inf"/"-inf"/"nan"
/// for non-finite values.
std::string format_double(double value);

std::vector<double> parse_double_list(std::string_view text);

/// `key = value` lines; '#' starts a comment. Later keys override earlier ones.
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);

}  // namespace thermopool

#endif  // THERMOPOOL_CSV_HPP
