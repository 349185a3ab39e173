#ifndef THERMOPOOL_PANEL_HPP
#define THERMOPOOL_PANEL_HPP

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "thermopool/exposure.hpp"

namespace thermopool {

/// (country, year) -> value, as read from `country,year,value` files.
using SeriesTable = std::map<CountryYear, double>;

SeriesTable load_series_csv(const std::filesystem::path& path);
void write_series_csv(const SeriesTable& series, const std::filesystem::path& path);

struct PanelRow {
  std::string country;
  int year = 0;
  double log_y = 0.0;
  double log_y_lag1 = 0.0;
  double log_gdp = 0.0;
  double log_price_lag1 = 0.0;
  std::vector<double> exposure;
};

/// Why candidate rows (country-years with demand) were dropped.
struct DropCensus {
  std::size_t candidates = 0;
  std::size_t missing_demand_lag = 0;
  std::size_t missing_gdp = 0;
  std::size_t missing_price_lag = 0;
  std::size_t missing_exposure = 0;

  std::size_t dropped() const {
    return missing_demand_lag + missing_gdp + missing_price_lag + missing_exposure;
  }
};

struct PanelDataset {
  std::vector<PanelRow> rows;  // sorted by (country, year)
  std::map<std::string, int> country_index;
  std::map<std::string, int> years_per_country;
  std::vector<double> edges;
  DropCensus dropped;

  int n_countries() const { return static_cast<int>(country_index.size()); }
  int first_year() const;
  int last_year() const;

  /// Rows with first <= year <= last; group ids are renumbered.
  PanelDataset restrict_years(int first, int last) const;
};

/// Inner join of demand, GDP, price, and exposure with one-year lags of log
/// demand and log price. Throws NonPositiveValue for any demand, GDP or price
/// value <= 0 and EmptyPanel when nothing survives.
PanelDataset assemble_panel(const SeriesTable& energy, const SeriesTable& gdp,
                            const SeriesTable& price, const ExposureTable& exposure);

struct DesignMatrix {
  Eigen::VectorXd response;
  Eigen::VectorXd lag;
  Eigen::MatrixXd exposure;    // n x K_eff, reference bins removed
  Eigen::MatrixXd covariates;  // n x L, centered
  Eigen::VectorXd covariate_centers;
  Eigen::VectorXd reference_mass;  // exposure share in the reference bins
  std::vector<int> group;
  std::vector<int> year;
  std::vector<std::string> groups;  // group id -> country code
  std::vector<std::string> exposure_labels;
  std::vector<std::string> covariate_labels;
  std::vector<std::size_t> retained_bins;
  std::vector<std::size_t> reference_bins;
  std::vector<std::string> warnings;
  std::vector<std::size_t> order;  // canonical summation order, by (group, year)

  std::size_t rows() const { return static_cast<std::size_t>(response.size()); }
  std::size_t n_groups() const { return groups.size(); }
  std::size_t k_eff() const { return static_cast<std::size_t>(exposure.cols()); }
  std::size_t n_covariates() const { return static_cast<std::size_t>(covariates.cols()); }

  /// Recomputes `order`; call after editing rows by hand.
  void finalize();

  /// Subset of rows (group ids and labels kept).
  DesignMatrix select_rows(std::span<const std::size_t> rows) const;
};

/// Drops reference-bin columns and centers log GDP and lagged log price.
/// Adds a RankWarning to `warnings` for globally constant columns and for
/// exposure columns that are a nonzero constant within one country (collinear
/// with that country's intercept).
DesignMatrix build_design(const PanelDataset& panel, const BinScheme& scheme);

/// country,year,group,log_y,log_y_lag1,<exposure labels>,<covariates>
/// Header comments carry retained/reference bins and covariate centers.
void write_design_csv(const DesignMatrix& design, const std::filesystem::path& path);
DesignMatrix read_design_csv(const std::filesystem::path& path);

}  // namespace thermopool

#endif  // THERMOPOOL_PANEL_HPP
