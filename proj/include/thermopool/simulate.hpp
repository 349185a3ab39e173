#ifndef THERMOPOOL_SIMULATE_HPP
#define THERMOPOOL_SIMULATE_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "thermopool/exposure.hpp"
#include "thermopool/gridio.hpp"
#include "thermopool/inference.hpp"
#include "thermopool/panel.hpp"

namespace thermopool {

/// Synthetic data-generating process. Temperature effects follow a V shape:
/// beta_cold per bin step below the reference block, beta_hot per step above.
/// Country deviations have independent components (identity correlation).
struct DgpConfig {
  std::uint64_t seed = 1;
  int countries = 6;
  int cells_per_country = 4;
  int first_year = 2000;
  int years = 8;
  int days_per_year = 24;  // sampled days per year, eight records each
  double width = 3.5;
  Variant variant = Variant::RandomSlopes;
  double alpha = 1.0;
  double nu = 0.5;
  double beta_cold = 0.15;
  double beta_hot = 0.2;
  double gamma_gdp = 0.4;
  double gamma_price = -0.2;
  double sigma_e = 0.1;
  double sd_intercept = 0.3;
  double sd_slope = 0.5;
  double climate_min = -2.0;  // range of country mean temperatures
  double climate_max = 26.0;
  double climate_sd = 7.0;    // within-year spread (design simulation)
};

/// Reads `key = value` lines; unknown keys throw InvalidConfig.
DgpConfig load_dgp_config(const std::filesystem::path& path);
DgpConfig dgp_from_key_values(const std::map<std::string, std::string>& kv);

struct SimulatedWorld {
  BinScheme scheme;
  GridBundle grid;
  SeriesTable energy;      // per-capita demand
  SeriesTable gdp;         // per-capita GDP
  SeriesTable price;
  SeriesTable population;  // country totals
  std::map<std::string, double> truth;  // constrained-row labels
};

/// Grids, series and true parameters. Demand is generated from the model
/// using exposure computed from the simulated grid.
SimulatedWorld simulate_world(const DgpConfig& config);

/// Writes the grid files plus energy.csv, gdp.csv, price.csv,
/// population_totals.csv and truth.csv into `dir`.
void write_world(const SimulatedWorld& world, const std::filesystem::path& dir);

namespace world_files {
inline constexpr const char* kEnergy = "energy.csv";
inline constexpr const char* kGdp = "gdp.csv";
inline constexpr const char* kPrice = "price.csv";
inline constexpr const char* kPopulationTotals = "population_totals.csv";
inline constexpr const char* kTruth = "truth.csv";
}  // namespace world_files

struct SimulatedDesign {
  BinScheme scheme;
  PanelDataset panel;
  DesignMatrix design;
  std::map<std::string, double> truth;
};

/// Panel without grids: each country-year's exposure is the mass a normal
/// temperature distribution (country climate plus a yearly anomaly, sd
/// climate_sd) puts in each bin. Much cheaper than simulate_world.
SimulatedDesign simulate_design(const DgpConfig& config);

}  // namespace thermopool

#endif  // THERMOPOOL_SIMULATE_HPP
