#ifndef THERMOPOOL_EXPOSURE_HPP
#define THERMOPOOL_EXPOSURE_HPP

#include <compare>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "thermopool/gridio.hpp"

namespace thermopool {

/// Temperature partition: an open cold bin (-inf, lower), interior bins of
/// equal width starting at `lower` (the last one truncated at `upper` when the
/// width does not divide the range), and an open warm bin [upper, inf).
struct BinScheme {
  double lower = -5.0;
  double upper = 30.0;
  double width = 3.5;
  std::vector<double> edges;                 // lower, ..., upper
  std::vector<std::size_t> reference_bins;   // sorted

  std::size_t bin_count() const { return edges.size() + 1; }
  double bin_lo(std::size_t k) const;
  double bin_hi(std::size_t k) const;
  bool is_reference(std::size_t k) const;
  std::vector<std::size_t> retained_bins() const;

  /// "below_-5", "-5_to_-1.5", ..., "above_30".
  std::string label(std::size_t k) const;
};

BinScheme make_bin_scheme(double width, double lower = -5.0, double upper = 30.0);

/// Same partition, reference set replaced by the single bin containing `temp`.
BinScheme with_reference_at(BinScheme scheme, double temp);

/// The nine widths 1.0, 1.5, ..., 5.0.
std::vector<double> standard_widths();

/// Day-count replication layout: 5.5 degree bins over [-12, 32] with the
/// [10, 15.5) bin as reference.
BinScheme replication_scheme();

std::size_t assign_bin(double temp_c, const BinScheme& scheme);

struct CountryYear {
  std::string country;
  int year = 0;

  auto operator<=>(const CountryYear&) const = default;
};

struct ExposureTable {
  std::vector<double> edges;  // scheme edges the table was built with
  std::map<CountryYear, std::vector<double>> values;
  std::map<CountryYear, int> hours_count;

  std::size_t bin_count() const { return edges.size() + 1; }
};

/// Local-hour interval [begin, end) used to retain daytime records.
struct DayWindow {
  int begin_hour = 6;
  int end_hour = 21;

  bool contains(int local_hour) const;
};

/// Solar offset rule: UTC hour + round(lon / 15), wrapped into [0, 24).
int local_hour(Timestamp t, double lon);

/// Population-weighted exposure shares per (country, year, bin).
///
/// w_j = p_{j,t} / sum over the country's cells, and each cell contributes
/// w_j times the fraction of its retained records that fall in bin k. With
/// complete three-hourly coverage every cell retains the same H_t records and
/// this is the average over retained slots of the population share exposed
/// to bin k. Years are UTC calendar years. `temperature_shift` is added to
/// every record before binning.
///
/// Throws ZeroPopulation or NoRetainedHours for a degenerate country-year.
ExposureTable compute_exposure(const TemperatureGrid& tg, const PopulationGrid& pg,
                               const CountryMap& cm, const BinScheme& scheme,
                               DayWindow window = {}, double temperature_shift = 0.0);

struct DayCountTable {
  std::vector<double> edges;
  std::map<CountryYear, std::vector<double>> values;

  std::size_t bin_count() const { return edges.size() + 1; }
};

/// Number of UTC days per (country, year) whose population-weighted daily
/// mean temperature falls in each bin.
DayCountTable compute_day_counts(const TemperatureGrid& tg, const PopulationGrid& pg,
                                 const CountryMap& cm, const BinScheme& scheme);

struct CensusBand {
  double lo = 0.0;
  double hi = 0.0;
  double population = 0.0;
};

/// Each mapped cell's annual mean temperature in `year` places its whole
/// population into one band; `thresholds` split the real line into
/// thresholds.size() + 1 bands. Throws YearNotCovered.
std::vector<CensusBand> climate_census(const TemperatureGrid& tg,
                                       const PopulationGrid& pg,
                                       const CountryMap& cm, int year,
                                       std::span<const double> thresholds,
                                       double temperature_shift = 0.0);

/// country,year,bin_lo,bin_hi,fraction
void write_exposure_csv(const ExposureTable& table, const std::filesystem::path& path);
ExposureTable read_exposure_csv(const std::filesystem::path& path);

/// country,year,bin_lo,bin_hi,days
void write_day_counts_csv(const DayCountTable& table, const std::filesystem::path& path);
DayCountTable read_day_counts_csv(const std::filesystem::path& path);

}  // namespace thermopool

#endif  // THERMOPOOL_EXPOSURE_HPP
