#include "thermopool/csv.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <cmath>
#include <fstream>
#include <istream>

#include "thermopool/error.hpp"

namespace thermopool {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    const auto piece = line.substr(start, pos == std::string_view::npos
                                              ? std::string_view::npos
                                              : pos - start);
    fields.emplace_back(trim(piece));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

}  // namespace

std::size_t CsvTable::column(std::string_view name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw Error(ErrorCode::MissingColumn,
                source.string() + ": no column '" + std::string(name) + "'");
  }
  return static_cast<std::size_t>(it - header.begin());
}

bool CsvTable::has_column(std::string_view name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

std::string CsvTable::where(std::size_t row) const {
  return source.string() + ":" + std::to_string(line_numbers.at(row));
}

CsvTable parse_csv(std::istream& in, const std::filesystem::path& source) {
  CsvTable table;
  table.source = source;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    auto fields = split_line(view);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw Error(ErrorCode::MalformedRow,
                  source.string() + ":" + std::to_string(line_no) +
                      ": expected " + std::to_string(table.header.size()) +
                      " fields, got " + std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(line_no);
  }
  if (!have_header) {
    throw Error(ErrorCode::MalformedRow, source.string() + ": missing header");
  }
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::FileNotFound, "cannot open " + path.string());
  }
  return parse_csv(in, path);
}

double parse_double(std::string_view text, const std::string& where) {
  text = trim(text);
  if (text == "inf" || text == "+inf" || text == "Inf") {
    return std::numeric_limits<double>::infinity();
  }
  if (text == "-inf" || text == "-Inf") {
    return -std::numeric_limits<double>::infinity();
  }
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto result = std::from_chars(text.data(), end, value);
  if (text.empty() || result.ec != std::errc() || result.ptr != end) {
    throw Error(ErrorCode::MalformedRow,
                where + ": cannot parse number '" + std::string(text) + "'");
  }
  return value;
}

std::int64_t parse_int(std::string_view text, const std::string& where) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  std::int64_t value = 0;
  const auto* end = text.data() + text.size();
  const auto result = std::from_chars(text.data(), end, value);
  if (text.empty() || result.ec != std::errc() || result.ptr != end) {
    throw Error(ErrorCode::MalformedRow,
                where + ": cannot parse integer '" + std::string(text) + "'");
  }
  return value;
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

std::vector<double> parse_double_list(std::string_view text) {
  std::vector<double> values;
  for (const auto& piece : split_line(text)) {
    if (!piece.empty()) values.push_back(parse_double(piece, "list"));
  }
  return values;
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string uncommented = line.substr(0, line.find('#'));
    const auto body = trim(uncommented);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::InvalidConfig,
                  path.string() + ":" + std::to_string(number) + ": expected key=value");
    }
    out[std::string(trim(body.substr(0, eq)))] = std::string(trim(body.substr(eq + 1)));
  }
  return out;
}

}  // namespace thermopool
