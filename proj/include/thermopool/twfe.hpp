#ifndef THERMOPOOL_TWFE_HPP
#define THERMOPOOL_TWFE_HPP

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "thermopool/exposure.hpp"
#include "thermopool/panel.hpp"

namespace thermopool {

/// Long-format regression data with country and year identifiers.
struct TwfeData {
  std::vector<std::string> country;
  std::vector<int> year;
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  std::vector<std::string> labels;

  std::size_t rows() const { return static_cast<std::size_t>(y.size()); }
};

struct TwfeFit {
  std::vector<std::string> labels;
  Eigen::VectorXd coefficients;  // NaN for omitted columns
  Eigen::MatrixXd vcov;          // cluster-robust by country; NaN rows/cols for omitted
  std::vector<std::string> omitted;  // columns with no within variation
  std::size_t n_obs = 0;
  std::size_t n_countries = 0;
  std::size_t n_years = 0;
  int demean_iterations = 0;

  Eigen::VectorXd standard_errors() const;
};

/// Alternately sweeps out country and year means until the largest update
/// is below `tol`. Returns the number of sweeps.
int within_transform(Eigen::MatrixXd& columns, const std::vector<int>& country_id,
                     const std::vector<int>& year_id, double tol = 1e-10);

/// Two-way fixed-effects OLS with country-clustered covariance and the
/// G/(G-1) (n-1)/(n-k) small-sample factor. Throws TooFewClusters with
/// fewer than two countries, InvalidConfig with fewer than two years and
/// RankDeficient for collinear regressors.
TwfeFit twfe_fit(const TwfeData& data);

/// twfe_fit with lagged log demand and lagged log price appended.
TwfeFit twfe_augmented(const TwfeData& data, const Eigen::VectorXd& lag_log_y,
                       const Eigen::VectorXd& lag_log_price);

/// y = log demand per capita; regressors are day counts in the non-reference
/// bins of `scheme`, then log population, its square, log GDP, its square.
TwfeData build_twfe_data(const DayCountTable& days, const BinScheme& scheme,
                         const SeriesTable& energy, const SeriesTable& gdp,
                         const SeriesTable& population);

struct LagColumns {
  TwfeData data;  // rows that have both lags
  Eigen::VectorXd lag_log_y;
  Eigen::VectorXd lag_log_price;
};

LagColumns lag_columns(const TwfeData& data, const SeriesTable& energy, const SeriesTable& price);

/// label,estimate,cluster_se,t_stat
void write_twfe_csv(const TwfeFit& fit, const std::filesystem::path& path);

}  // namespace thermopool

#endif  // THERMOPOOL_TWFE_HPP
