#ifndef THERMOPOOL_GRIDIO_HPP
#define THERMOPOOL_GRIDIO_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace thermopool {

using CellId = std::int64_t;

/// Seconds since 1970-01-01T00:00:00Z.
using Timestamp = std::int64_t;

constexpr Timestamp kSecondsPerHour = 3600;
constexpr Timestamp kSecondsPerDay = 86400;
constexpr double kMinTemperature = -90.0;
constexpr double kMaxTemperature = 60.0;

/// Parses "YYYY-MM-DDTHH:MM:SS" with an optional trailing "Z" or "+00:00".
/// A space may replace the "T".
Timestamp parse_timestamp(std::string_view text, const std::string& where);
std::string format_timestamp(Timestamp t);
int utc_year(Timestamp t);
int utc_hour(Timestamp t);
/// Days since the epoch (floor division).
std::int64_t utc_day(Timestamp t);

struct TemperatureRecord {
  CellId cell = 0;
  Timestamp time = 0;
  double temp_c = 0.0;

  friend bool operator==(const TemperatureRecord&, const TemperatureRecord&) = default;
};

struct CellMeta {
  double lat = 0.0;
  double lon = 0.0;
};

/// Three-hourly gridded temperatures. Records are kept sorted by
/// (cell, time) and unique; that ordering fixes every downstream reduction.
class TemperatureGrid {
 public:
  TemperatureGrid() = default;

  /// Validates and sorts. Throws DuplicateRecord, OutOfRangeTemperature,
  /// MalformedRow (misaligned timestamp or unknown cell).
  static TemperatureGrid from_records(std::vector<TemperatureRecord> records,
                                      std::map<CellId, CellMeta> cells);

  const std::vector<TemperatureRecord>& records() const { return records_; }
  const std::map<CellId, CellMeta>& cells() const { return cells_; }
  std::set<int> years() const;

  /// Half-open index range [first, second) of the records of one cell.
  std::pair<std::size_t, std::size_t> cell_range(CellId cell) const;

  /// Copy with every temperature shifted by `delta` (no range check; used for
  /// counterfactual warming).
  TemperatureGrid shifted(double delta) const;

 private:
  std::vector<TemperatureRecord> records_;
  std::map<CellId, CellMeta> cells_;
  std::map<CellId, std::pair<std::size_t, std::size_t>> ranges_;

  void index();
};

struct PopulationGrid {
  std::map<std::pair<CellId, int>, double> counts;

  /// Population of a cell in a year; 0 when absent.
  double count(CellId cell, int year) const;
  bool has(CellId cell, int year) const;
};

struct CountryMap {
  std::map<CellId, std::string> assignment;

  std::map<std::string, std::vector<CellId>> cells_by_country() const;
};

struct TemperatureSchema {
  std::string cell_column = "cell_id";
  std::string time_column = "timestamp";
  std::string temp_column = "temp_c";
};

/// `cells_path` holds cell_id,lat,lon for every cell referenced by the
/// temperature file.
TemperatureGrid load_temperature_grid(const std::filesystem::path& path,
                                      const std::filesystem::path& cells_path,
                                      const TemperatureSchema& schema = {});
PopulationGrid load_population_grid(const std::filesystem::path& path);
CountryMap load_country_map(const std::filesystem::path& path);

void write_temperature_grid(const TemperatureGrid& grid,
                            const std::filesystem::path& path);
void write_cells(const TemperatureGrid& grid, const std::filesystem::path& path);
void write_population_grid(const PopulationGrid& grid,
                           const std::filesystem::path& path);
void write_country_map(const CountryMap& map, const std::filesystem::path& path);

/// The triple of files found in a grid directory.
struct GridBundle {
  TemperatureGrid temperature;
  PopulationGrid population;
  CountryMap countries;
};

namespace grid_files {
inline constexpr const char* kTemperature = "temperature.csv";
inline constexpr const char* kCells = "cells.csv";
inline constexpr const char* kPopulation = "population.csv";
inline constexpr const char* kMapping = "mapping.csv";
}  // namespace grid_files

GridBundle load_grid_dir(const std::filesystem::path& dir);
void write_grid_dir(const GridBundle& bundle, const std::filesystem::path& dir);

enum class Severity { Warning, Fatal };

struct AlignmentEntry {
  Severity severity = Severity::Warning;
  std::string kind;
  std::string message;

  friend bool operator==(const AlignmentEntry&, const AlignmentEntry&) = default;
};

struct AlignmentReport {
  std::vector<AlignmentEntry> entries;

  bool empty() const { return entries.empty(); }
  bool fatal() const;
  std::size_t count(Severity severity) const;

  friend bool operator==(const AlignmentReport&, const AlignmentReport&) = default;
};

/// Cross-checks the three inputs. Entries are emitted in a fixed order:
/// unmapped cells, cells lacking population, zero-weight country-years, and
/// years lacking temperature coverage.
AlignmentReport validate_alignment(const TemperatureGrid& tg,
                                   const PopulationGrid& pg,
                                   const CountryMap& cm);

}  // namespace thermopool

#endif  // THERMOPOOL_GRIDIO_HPP
