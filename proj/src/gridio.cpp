#include "thermopool/gridio.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "thermopool/csv.hpp"
#include "thermopool/error.hpp"

namespace thermopool {

namespace {

int parse_fixed(std::string_view s, std::size_t pos, std::size_t len,
                const std::string& where, std::string_view original) {
  if (pos + len > s.size()) {
    throw Error(ErrorCode::MalformedRow,
                where + ": bad timestamp '" + std::string(original) + "'");
  }
  int value = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    const char c = s[i];
    if (c < '0' || c > '9') {
      throw Error(ErrorCode::MalformedRow,
                  where + ": bad timestamp '" + std::string(original) + "'");
    }
    value = value * 10 + (c - '0');
  }
  return value;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot write " + path.string());
  return out;
}

}  // namespace

Timestamp parse_timestamp(std::string_view text, const std::string& where) {
  const std::string_view original = text;
  if (!text.empty() && text.back() == 'Z') text.remove_suffix(1);
  if (text.size() > 6 && text.substr(text.size() - 6) == "+00:00") {
    text.remove_suffix(6);
  }
  // YYYY-MM-DDTHH:MM:SS or YYYY-MM-DDTHH:MM
  if (text.size() != 19 && text.size() != 16) {
    throw Error(ErrorCode::MalformedRow,
                where + ": bad timestamp '" + std::string(original) + "'");
  }
  if (text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') ||
      text[13] != ':' || (text.size() == 19 && text[16] != ':')) {
    throw Error(ErrorCode::MalformedRow,
                where + ": bad timestamp '" + std::string(original) + "'");
  }
  const int y = parse_fixed(text, 0, 4, where, original);
  const int mo = parse_fixed(text, 5, 2, where, original);
  const int d = parse_fixed(text, 8, 2, where, original);
  const int h = parse_fixed(text, 11, 2, where, original);
  const int mi = parse_fixed(text, 14, 2, where, original);
  const int se = text.size() == 19 ? parse_fixed(text, 17, 2, where, original) : 0;
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || se > 59) {
    throw Error(ErrorCode::MalformedRow,
                where + ": invalid date '" + std::string(original) + "'");
  }
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<Timestamp>(days) * kSecondsPerDay + h * kSecondsPerHour +
         mi * 60 + se;
}

std::int64_t utc_day(Timestamp t) { return floor_div(t, kSecondsPerDay); }

int utc_hour(Timestamp t) {
  return static_cast<int>((t - utc_day(t) * kSecondsPerDay) / kSecondsPerHour);
}

int utc_year(Timestamp t) {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{days{utc_day(t)}}};
  return static_cast<int>(ymd.year());
}

std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const auto day_count = utc_day(t);
  const year_month_day ymd{sys_days{days{day_count}}};
  const auto rem = t - day_count * kSecondsPerDay;
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%04d-%02u-%02uT%02d:%02d:%02dZ",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 3600),
                static_cast<int>((rem % 3600) / 60), static_cast<int>(rem % 60));
  return buffer;
}

// ---------------------------------------------------------------------------
// TemperatureGrid

TemperatureGrid TemperatureGrid::from_records(
    std::vector<TemperatureRecord> records, std::map<CellId, CellMeta> cells) {
  for (const auto& r : records) {
    if (!std::isfinite(r.temp_c) || r.temp_c < kMinTemperature ||
        r.temp_c > kMaxTemperature) {
      throw Error(ErrorCode::OutOfRangeTemperature,
                  "cell " + std::to_string(r.cell) + " at " +
                      format_timestamp(r.time) + ": " + format_double(r.temp_c));
    }
    if (r.time % (3 * kSecondsPerHour) != 0) {
      throw Error(ErrorCode::MalformedRow,
                  "cell " + std::to_string(r.cell) + ": timestamp " +
                      format_timestamp(r.time) + " not on a 3-hour boundary");
    }
    if (!cells.contains(r.cell)) {
      throw Error(ErrorCode::MalformedRow,
                  "cell " + std::to_string(r.cell) + " has no coordinates");
    }
  }
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return a.cell != b.cell ? a.cell < b.cell : a.time < b.time;
  });
  const auto dup = std::adjacent_find(
      records.begin(), records.end(),
      [](const auto& a, const auto& b) { return a.cell == b.cell && a.time == b.time; });
  if (dup != records.end()) {
    throw Error(ErrorCode::DuplicateRecord,
                "cell " + std::to_string(dup->cell) + " at " +
                    format_timestamp(dup->time));
  }
  TemperatureGrid grid;
  grid.records_ = std::move(records);
  grid.cells_ = std::move(cells);
  grid.index();
  return grid;
}

void TemperatureGrid::index() {
  ranges_.clear();
  std::size_t i = 0;
  while (i < records_.size()) {
    std::size_t j = i;
    while (j < records_.size() && records_[j].cell == records_[i].cell) ++j;
    ranges_[records_[i].cell] = {i, j};
    i = j;
  }
}

std::set<int> TemperatureGrid::years() const {
  std::set<int> out;
  for (const auto& r : records_) out.insert(utc_year(r.time));
  return out;
}

std::pair<std::size_t, std::size_t> TemperatureGrid::cell_range(CellId cell) const {
  const auto it = ranges_.find(cell);
  if (it == ranges_.end()) return {0, 0};
  return it->second;
}

TemperatureGrid TemperatureGrid::shifted(double delta) const {
  TemperatureGrid copy = *this;
  for (auto& r : copy.records_) r.temp_c += delta;
  return copy;
}

double PopulationGrid::count(CellId cell, int year) const {
  const auto it = counts.find({cell, year});
  return it == counts.end() ? 0.0 : it->second;
}

bool PopulationGrid::has(CellId cell, int year) const {
  return counts.contains({cell, year});
}

std::map<std::string, std::vector<CellId>> CountryMap::cells_by_country() const {
  std::map<std::string, std::vector<CellId>> out;
  for (const auto& [cell, country] : assignment) out[country].push_back(cell);
  return out;
}

// ---------------------------------------------------------------------------
// Loading and writing

TemperatureGrid load_temperature_grid(const std::filesystem::path& path,
                                      const std::filesystem::path& cells_path,
                                      const TemperatureSchema& schema) {
  const auto cells_csv = read_csv(cells_path);
  const auto c_id = cells_csv.column("cell_id");
  const auto c_lat = cells_csv.column("lat");
  const auto c_lon = cells_csv.column("lon");
  std::map<CellId, CellMeta> cells;
  for (std::size_t i = 0; i < cells_csv.rows.size(); ++i) {
    const auto& row = cells_csv.rows[i];
    const auto where = cells_csv.where(i);
    const CellId id = parse_int(row[c_id], where);
    const CellMeta meta{parse_double(row[c_lat], where),
                        parse_double(row[c_lon], where)};
    if (!cells.emplace(id, meta).second) {
      throw Error(ErrorCode::DuplicateRecord, where + ": cell " + std::to_string(id));
    }
  }

  const auto csv = read_csv(path);
  const auto col_cell = csv.column(schema.cell_column);
  const auto col_time = csv.column(schema.time_column);
  const auto col_temp = csv.column(schema.temp_column);
  std::vector<TemperatureRecord> records;
  records.reserve(csv.rows.size());
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const auto& row = csv.rows[i];
    const auto where = csv.where(i);
    TemperatureRecord r;
    r.cell = parse_int(row[col_cell], where);
    r.time = parse_timestamp(row[col_time], where);
    r.temp_c = parse_double(row[col_temp], where);
    records.push_back(r);
  }
  return TemperatureGrid::from_records(std::move(records), std::move(cells));
}

PopulationGrid load_population_grid(const std::filesystem::path& path) {
  const auto csv = read_csv(path);
  const auto c_cell = csv.column("cell_id");
  const auto c_year = csv.column("year");
  const auto c_pop = csv.column("population");
  PopulationGrid grid;
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const auto& row = csv.rows[i];
    const auto where = csv.where(i);
    const CellId cell = parse_int(row[c_cell], where);
    const int year = static_cast<int>(parse_int(row[c_year], where));
    const double pop = parse_double(row[c_pop], where);
    if (!std::isfinite(pop) || pop < 0.0) {
      throw Error(ErrorCode::MalformedRow, where + ": negative or non-finite population");
    }
    if (!grid.counts.emplace(std::make_pair(cell, year), pop).second) {
      throw Error(ErrorCode::DuplicateRecord,
                  where + ": cell " + std::to_string(cell) + " year " +
                      std::to_string(year));
    }
  }
  return grid;
}

CountryMap load_country_map(const std::filesystem::path& path) {
  const auto csv = read_csv(path);
  const auto c_cell = csv.column("cell_id");
  const auto c_country = csv.column("country");
  CountryMap map;
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const auto& row = csv.rows[i];
    const auto where = csv.where(i);
    const CellId cell = parse_int(row[c_cell], where);
    if (row[c_country].empty()) {
      throw Error(ErrorCode::MalformedRow, where + ": empty country code");
    }
    if (!map.assignment.emplace(cell, row[c_country]).second) {
      throw Error(ErrorCode::DuplicateRecord, where + ": cell " + std::to_string(cell));
    }
  }
  return map;
}

void write_temperature_grid(const TemperatureGrid& grid,
                            const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "cell_id,timestamp,temp_c\n";
  for (const auto& r : grid.records()) {
    out << r.cell << ',' << format_timestamp(r.time) << ','
        << format_double(r.temp_c) << '\n';
  }
}

void write_cells(const TemperatureGrid& grid, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "cell_id,lat,lon\n";
  for (const auto& [id, meta] : grid.cells()) {
    out << id << ',' << format_double(meta.lat) << ',' << format_double(meta.lon)
        << '\n';
  }
}

void write_population_grid(const PopulationGrid& grid,
                           const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "cell_id,year,population\n";
  for (const auto& [key, pop] : grid.counts) {
    out << key.first << ',' << key.second << ',' << format_double(pop) << '\n';
  }
}

void write_country_map(const CountryMap& map, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "cell_id,country\n";
  for (const auto& [cell, country] : map.assignment) {
    out << cell << ',' << country << '\n';
  }
}

GridBundle load_grid_dir(const std::filesystem::path& dir) {
  GridBundle bundle;
  bundle.temperature = load_temperature_grid(dir / grid_files::kTemperature,
                                             dir / grid_files::kCells);
  bundle.population = load_population_grid(dir / grid_files::kPopulation);
  bundle.countries = load_country_map(dir / grid_files::kMapping);
  return bundle;
}

void write_grid_dir(const GridBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_temperature_grid(bundle.temperature, dir / grid_files::kTemperature);
  write_cells(bundle.temperature, dir / grid_files::kCells);
  write_population_grid(bundle.population, dir / grid_files::kPopulation);
  write_country_map(bundle.countries, dir / grid_files::kMapping);
}

// ---------------------------------------------------------------------------
// Alignment

bool AlignmentReport::fatal() const { return count(Severity::Fatal) > 0; }

std::size_t AlignmentReport::count(Severity severity) const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(),
      [severity](const auto& e) { return e.severity == severity; }));
}

AlignmentReport validate_alignment(const TemperatureGrid& tg,
                                   const PopulationGrid& pg,
                                   const CountryMap& cm) {
  AlignmentReport report;

  // Years in which each cell has temperature records.
  std::map<CellId, std::set<int>> cell_years;
  for (const auto& r : tg.records()) cell_years[r.cell].insert(utc_year(r.time));

  std::map<CellId, std::set<int>> pop_years;
  for (const auto& [key, pop] : pg.counts) pop_years[key.first].insert(key.second);

  for (const auto& [cell, years] : cell_years) {
    if (!cm.assignment.contains(cell)) {
      report.entries.push_back({Severity::Fatal, "unmapped_cell",
                                "cell " + std::to_string(cell) +
                                    " has temperature records but no country"});
    }
  }

  for (const auto& [cell, years] : cell_years) {
    const auto it = pop_years.find(cell);
    if (it == pop_years.end()) {
      report.entries.push_back({Severity::Warning, "missing_population",
                                "cell " + std::to_string(cell) +
                                    " has no population records"});
      continue;
    }
    for (int year : years) {
      if (!it->second.contains(year)) {
        report.entries.push_back(
            {Severity::Warning, "missing_population",
             "cell " + std::to_string(cell) + " has no population for year " +
                 std::to_string(year)});
      }
    }
  }

  for (const auto& [country, cells] : cm.cells_by_country()) {
    std::set<int> temp_years;
    std::set<int> population_years;
    for (CellId cell : cells) {
      if (const auto it = cell_years.find(cell); it != cell_years.end()) {
        temp_years.insert(it->second.begin(), it->second.end());
      }
      if (const auto it = pop_years.find(cell); it != pop_years.end()) {
        population_years.insert(it->second.begin(), it->second.end());
      }
    }
    for (int year : temp_years) {
      double total = 0.0;
      for (CellId cell : cells) {
        const auto it = cell_years.find(cell);
        if (it != cell_years.end() && it->second.contains(year)) {
          total += pg.count(cell, year);
        }
      }
      if (!(total > 0.0)) {
        report.entries.push_back(
            {Severity::Fatal, "zero_population",
             "country " + country + " has zero total population in year " +
                 std::to_string(year)});
      }
    }
    for (int year : population_years) {
      if (!temp_years.contains(year)) {
        report.entries.push_back(
            {Severity::Warning, "missing_temperature",
             "country " + country + " has population but no temperature records in year " +
                 std::to_string(year)});
      }
    }
  }
  return report;
}

}  // namespace thermopool
