#include "thermopool/exposure.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "thermopool/csv.hpp"
#include "thermopool/error.hpp"

namespace thermopool {

namespace {

constexpr double kEdgeTol = 1e-9;

// Neumaier summation.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

bool is_edge(const std::vector<double>& edges, double value) {
  return std::any_of(edges.begin(), edges.end(),
                     [value](double e) { return std::abs(e - value) < kEdgeTol; });
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot write " + path.string());
  return out;
}

struct CellTally {
  std::vector<int> counts;
  int retained = 0;
};

}  // namespace

double BinScheme::bin_lo(std::size_t k) const {
  if (k == 0) return -std::numeric_limits<double>::infinity();
  return edges.at(k - 1);
}

double BinScheme::bin_hi(std::size_t k) const {
  if (k >= edges.size()) return std::numeric_limits<double>::infinity();
  return edges[k];
}

bool BinScheme::is_reference(std::size_t k) const {
  return std::binary_search(reference_bins.begin(), reference_bins.end(), k);
}

std::vector<std::size_t> BinScheme::retained_bins() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < bin_count(); ++k) {
    if (!is_reference(k)) out.push_back(k);
  }
  return out;
}

std::string BinScheme::label(std::size_t k) const {
  if (k == 0) return "below_" + format_double(lower);
  if (k + 1 == bin_count()) return "above_" + format_double(upper);
  return format_double(bin_lo(k)) + "_to_" + format_double(bin_hi(k));
}

BinScheme make_bin_scheme(double width, double lower, double upper) {
  if (!std::isfinite(width) || !(width > 0.0)) {
    throw Error(ErrorCode::InvalidWidth, "bin width must be positive, got " +
                                             format_double(width));
  }
  if (!std::isfinite(lower) || !std::isfinite(upper) || !(lower < upper)) {
    throw Error(ErrorCode::InvertedRange, "need lower < upper, got [" +
                                              format_double(lower) + ", " +
                                              format_double(upper) + "]");
  }
  BinScheme scheme;
  scheme.lower = lower;
  scheme.upper = upper;
  scheme.width = width;

  const double ratio = (upper - lower) / width;
  const double nearest = std::round(ratio);
  const auto interior = static_cast<std::size_t>(
      std::abs(ratio - nearest) < kEdgeTol ? nearest : std::ceil(ratio));
  for (std::size_t i = 0; i < interior; ++i) {
    scheme.edges.push_back(lower + static_cast<double>(i) * width);
  }
  scheme.edges.push_back(upper);

  if (is_edge(scheme.edges, 16.0) && is_edge(scheme.edges, 23.0)) {
    for (std::size_t k = 1; k + 1 < scheme.bin_count(); ++k) {
      if (scheme.bin_lo(k) >= 16.0 - kEdgeTol && scheme.bin_hi(k) <= 23.0 + kEdgeTol) {
        scheme.reference_bins.push_back(k);
      }
    }
  } else {
    scheme.reference_bins.push_back(assign_bin(19.5, scheme));
  }
  return scheme;
}

BinScheme with_reference_at(BinScheme scheme, double temp) {
  scheme.reference_bins = {assign_bin(temp, scheme)};
  return scheme;
}

std::vector<double> standard_widths() {
  std::vector<double> widths;
  for (int i = 0; i <= 8; ++i) widths.push_back(1.0 + 0.5 * i);
  return widths;
}

BinScheme replication_scheme() {
  return with_reference_at(make_bin_scheme(5.5, -12.0, 32.0), 12.0);
}

std::size_t assign_bin(double temp_c, const BinScheme& scheme) {
  const auto it = std::upper_bound(scheme.edges.begin(), scheme.edges.end(), temp_c);
  return static_cast<std::size_t>(it - scheme.edges.begin());
}

bool DayWindow::contains(int hour) const {
  if (begin_hour <= end_hour) return hour >= begin_hour && hour < end_hour;
  return hour >= begin_hour || hour < end_hour;  // window wraps midnight
}

int local_hour(Timestamp t, double lon) {
  const int offset = static_cast<int>(std::lround(lon / 15.0));
  return ((utc_hour(t) + offset) % 24 + 24) % 24;
}

ExposureTable compute_exposure(const TemperatureGrid& tg, const PopulationGrid& pg,
                               const CountryMap& cm, const BinScheme& scheme,
                               DayWindow window, double temperature_shift) {
  const std::size_t K = scheme.bin_count();
  ExposureTable table;
  table.edges = scheme.edges;

  for (const auto& [country, cells] : cm.cells_by_country()) {
    // cell -> year -> tally, iterated in cell order then year order.
    std::map<CellId, std::map<int, CellTally>> tallies;
    std::set<int> years;
    for (CellId cell : cells) {
      const auto [first, last] = tg.cell_range(cell);
      if (first == last) continue;
      const double lon = tg.cells().at(cell).lon;
      auto& per_year = tallies[cell];
      for (std::size_t i = first; i < last; ++i) {
        const auto& r = tg.records()[i];
        const int year = utc_year(r.time);
        years.insert(year);
        auto& tally = per_year[year];
        if (tally.counts.empty()) tally.counts.assign(K, 0);
        if (!window.contains(local_hour(r.time, lon))) continue;
        ++tally.counts[assign_bin(r.temp_c + temperature_shift, scheme)];
        ++tally.retained;
      }
    }

    for (int year : years) {
      CompensatedSum total;
      int hours = 0;
      for (const auto& [cell, per_year] : tallies) {
        const auto it = per_year.find(year);
        if (it == per_year.end() || it->second.retained == 0) continue;
        total.add(pg.count(cell, year));
        hours = std::max(hours, it->second.retained);
      }
      if (hours == 0) {
        throw Error(ErrorCode::NoRetainedHours,
                    country + " " + std::to_string(year) +
                        ": no records inside the daytime window");
      }
      const double denom = total.value();
      if (!(denom > 0.0)) {
        throw Error(ErrorCode::ZeroPopulation,
                    country + " " + std::to_string(year) + ": total population is zero");
      }
      std::vector<double> fractions(K, 0.0);
      for (std::size_t k = 0; k < K; ++k) {
        CompensatedSum acc;
        for (const auto& [cell, per_year] : tallies) {
          const auto it = per_year.find(year);
          if (it == per_year.end() || it->second.retained == 0) continue;
          const int c = it->second.counts[k];
          if (c == 0) continue;
          const double weight = pg.count(cell, year) / denom;
          acc.add(weight * (static_cast<double>(c) / it->second.retained));
        }
        fractions[k] = acc.value();
      }
      table.values[{country, year}] = std::move(fractions);
      table.hours_count[{country, year}] = hours;
    }
  }
  return table;
}

DayCountTable compute_day_counts(const TemperatureGrid& tg, const PopulationGrid& pg,
                                 const CountryMap& cm, const BinScheme& scheme) {
  const std::size_t K = scheme.bin_count();
  DayCountTable table;
  table.edges = scheme.edges;

  for (const auto& [country, cells] : cm.cells_by_country()) {
    // day -> cell -> (sum, n)
    std::map<std::int64_t, std::map<CellId, std::pair<double, int>>> daily;
    for (CellId cell : cells) {
      const auto [first, last] = tg.cell_range(cell);
      for (std::size_t i = first; i < last; ++i) {
        const auto& r = tg.records()[i];
        auto& slot = daily[utc_day(r.time)][cell];
        slot.first += r.temp_c;
        ++slot.second;
      }
    }
    for (const auto& [day, per_cell] : daily) {
      const int year = utc_year(day * kSecondsPerDay);
      CompensatedSum total;
      for (const auto& [cell, slot] : per_cell) total.add(pg.count(cell, year));
      const double denom = total.value();
      if (!(denom > 0.0)) {
        throw Error(ErrorCode::ZeroPopulation,
                    country + " " + std::to_string(year) + ": total population is zero");
      }
      CompensatedSum mean;
      for (const auto& [cell, slot] : per_cell) {
        mean.add(pg.count(cell, year) / denom * (slot.first / slot.second));
      }
      auto& row = table.values[{country, year}];
      if (row.empty()) row.assign(K, 0.0);
      row[assign_bin(mean.value(), scheme)] += 1.0;
    }
  }
  return table;
}

std::vector<CensusBand> climate_census(const TemperatureGrid& tg,
                                       const PopulationGrid& pg,
                                       const CountryMap& cm, int year,
                                       std::span<const double> thresholds,
                                       double temperature_shift) {
  std::vector<double> cuts(thresholds.begin(), thresholds.end());
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::vector<CensusBand> bands(cuts.size() + 1);
  for (std::size_t b = 0; b < bands.size(); ++b) {
    bands[b].lo = b == 0 ? -std::numeric_limits<double>::infinity() : cuts[b - 1];
    bands[b].hi = b == cuts.size() ? std::numeric_limits<double>::infinity() : cuts[b];
  }

  bool temperature_seen = false;
  bool population_seen = false;
  std::vector<CompensatedSum> sums(bands.size());
  for (const auto& [cell, country] : cm.assignment) {
    const auto [first, last] = tg.cell_range(cell);
    CompensatedSum temp_sum;
    int n = 0;
    for (std::size_t i = first; i < last; ++i) {
      const auto& r = tg.records()[i];
      if (utc_year(r.time) != year) continue;
      temp_sum.add(r.temp_c + temperature_shift);
      ++n;
    }
    if (n == 0) continue;
    temperature_seen = true;
    if (!pg.has(cell, year)) continue;
    population_seen = true;
    const double annual_mean = temp_sum.value() / n;
    const auto band = static_cast<std::size_t>(
        std::upper_bound(cuts.begin(), cuts.end(), annual_mean) - cuts.begin());
    sums[band].add(pg.count(cell, year));
  }
  if (!temperature_seen || !population_seen) {
    throw Error(ErrorCode::YearNotCovered,
                "year " + std::to_string(year) + " lacks " +
                    (temperature_seen ? "population" : "temperature") + " data");
  }
  for (std::size_t b = 0; b < bands.size(); ++b) bands[b].population = sums[b].value();
  return bands;
}

namespace {

template <typename Table>
void write_binned(const Table& table, const std::filesystem::path& path,
                  const char* value_column) {
  auto out = open_out(path);
  out << "country,year,bin_lo,bin_hi," << value_column << '\n';
  BinScheme scheme;
  scheme.edges = table.edges;
  for (const auto& [key, values] : table.values) {
    for (std::size_t k = 0; k < values.size(); ++k) {
      out << key.country << ',' << key.year << ',' << format_double(scheme.bin_lo(k))
          << ',' << format_double(scheme.bin_hi(k)) << ',' << format_double(values[k])
          << '\n';
    }
  }
}

template <typename Table>
Table read_binned(const std::filesystem::path& path, const char* value_column) {
  const auto csv = read_csv(path);
  const auto c_country = csv.column("country");
  const auto c_year = csv.column("year");
  const auto c_lo = csv.column("bin_lo");
  const auto c_hi = csv.column("bin_hi");
  const auto c_val = csv.column(value_column);

  std::set<double> edge_set;
  struct Entry {
    CountryYear key;
    double lo;
    double value;
    std::string where;
  };
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const auto& row = csv.rows[i];
    const auto where = csv.where(i);
    const double lo = parse_double(row[c_lo], where);
    const double hi = parse_double(row[c_hi], where);
    if (!(lo < hi)) throw Error(ErrorCode::MalformedRow, where + ": bin_lo >= bin_hi");
    if (std::isfinite(lo)) edge_set.insert(lo);
    if (std::isfinite(hi)) edge_set.insert(hi);
    entries.push_back({{row[c_country], static_cast<int>(parse_int(row[c_year], where))},
                       lo, parse_double(row[c_val], where), where});
  }
  Table table;
  table.edges.assign(edge_set.begin(), edge_set.end());
  BinScheme scheme;
  scheme.edges = table.edges;
  const std::size_t K = scheme.bin_count();
  std::map<CountryYear, std::vector<int>> seen;
  for (const auto& e : entries) {
    const std::size_t k = std::isfinite(e.lo) ? assign_bin(e.lo, scheme) : 0;
    auto& row = table.values[e.key];
    auto& flags = seen[e.key];
    if (row.empty()) {
      row.assign(K, 0.0);
      flags.assign(K, 0);
    }
    if (flags[k]) throw Error(ErrorCode::DuplicateRecord, e.where);
    flags[k] = 1;
    row[k] = e.value;
  }
  for (const auto& [key, flags] : seen) {
    if (std::find(flags.begin(), flags.end(), 0) != flags.end()) {
      throw Error(ErrorCode::MalformedRow, path.string() + ": " + key.country + " " +
                                               std::to_string(key.year) +
                                               " does not list every bin");
    }
  }
  return table;
}

}  // namespace

void write_exposure_csv(const ExposureTable& table, const std::filesystem::path& path) {
  write_binned(table, path, "fraction");
}

ExposureTable read_exposure_csv(const std::filesystem::path& path) {
  return read_binned<ExposureTable>(path, "fraction");
}

void write_day_counts_csv(const DayCountTable& table, const std::filesystem::path& path) {
  write_binned(table, path, "days");
}

DayCountTable read_day_counts_csv(const std::filesystem::path& path) {
  return read_binned<DayCountTable>(path, "days");
}

}  // namespace thermopool
