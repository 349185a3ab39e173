#include "thermopool/simulate.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "thermopool/csv.hpp"
#include "thermopool/error.hpp"
#include "thermopool/rng.hpp"

namespace thermopool {

namespace {

// Stream ids keep the pieces of a world independent of each other's sizes.
enum Stream : std::uint64_t { kClimate = 1, kWeather, kPopulation, kEconomy, kEffects, kNoise };

std::string country_code(int i) {
  std::string s = "C";
  if (i < 10) s += '0';
  return s + std::to_string(i);
}

struct Truth {
  double alpha = 0.0, nu = 0.0, sigma_e = 0.0;
  Eigen::VectorXd beta;    // retained bins
  Eigen::VectorXd gamma;   // log_gdp, log_price_lag1 (centered)
  Eigen::VectorXd sd;      // group sds
  Eigen::MatrixXd effects; // countries x D
};

Truth make_truth(const DgpConfig& c, const BinScheme& scheme) {
  Truth t;
  t.alpha = c.alpha;
  t.nu = c.nu;
  t.sigma_e = c.sigma_e;
  const auto retained = scheme.retained_bins();
  t.beta.resize(static_cast<Eigen::Index>(retained.size()));
  const auto ref_lo = static_cast<double>(scheme.reference_bins.front());
  const auto ref_hi = static_cast<double>(scheme.reference_bins.back());
  for (std::size_t i = 0; i < retained.size(); ++i) {
    const auto k = static_cast<double>(retained[i]);
    t.beta[static_cast<Eigen::Index>(i)] =
        k < ref_lo ? c.beta_cold * (ref_lo - k) : c.beta_hot * (k - ref_hi);
  }
  t.gamma.resize(2);
  t.gamma << c.gamma_gdp, c.gamma_price;
  const auto K = t.beta.size();
  Eigen::Index D = 0;
  if (c.variant == Variant::RandomSlopes) D = K + 1;
  if (c.variant == Variant::RandomIntercepts) D = 1;
  t.sd = Eigen::VectorXd::Constant(D, c.sd_slope);
  if (D > 0) t.sd[0] = c.sd_intercept;
  t.effects.resize(c.countries, D);
  CounterRng rng(c.seed, kEffects, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < c.countries; ++i) {
    for (Eigen::Index j = 0; j < D; ++j) t.effects(i, j) = t.sd[j] * normal(rng);
  }
  return t;
}

std::map<std::string, double> truth_labels(const Truth& t, const BinScheme& scheme, int countries) {
  std::map<std::string, double> out;
  std::vector<std::string> coef{"Intercept"};
  for (const auto k : scheme.retained_bins()) coef.push_back(scheme.label(k));
  out["alpha"] = t.alpha;
  out["nu"] = t.nu;
  for (Eigen::Index c = 0; c < t.beta.size(); ++c) {
    out["beta[" + coef[static_cast<std::size_t>(c + 1)] + "]"] = t.beta[c];
  }
  out["gamma[log_gdp]"] = t.gamma[0];
  out["gamma[log_price_lag1]"] = t.gamma[1];
  out["sigma_e"] = t.sigma_e;
  const auto D = t.sd.size();
  for (Eigen::Index j = 0; j < D; ++j) out["sd[" + coef[static_cast<std::size_t>(j)] + "]"] = t.sd[j];
  for (Eigen::Index i = 1; i < D; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      out["cor[" + coef[static_cast<std::size_t>(j)] + "|" + coef[static_cast<std::size_t>(i)] + "]"] = 0.0;
    }
  }
  for (int g = 0; g < countries; ++g) {
    for (Eigen::Index j = 0; j < D; ++j) {
      out["r[" + country_code(g) + "|" + coef[static_cast<std::size_t>(j)] + "]"] = t.effects(g, j);
    }
  }
  return out;
}

struct Economy {
  SeriesTable gdp, price;
  double center_gdp = 0.0, center_price = 0.0;
};

Economy make_economy(const DgpConfig& c) {
  Economy e;
  std::normal_distribution<double> normal(0.0, 1.0);
  double s_gdp = 0.0, s_price = 0.0;
  int n = 0;
  for (int i = 0; i < c.countries; ++i) {
    CounterRng rng(c.seed, kEconomy, static_cast<std::uint64_t>(i));
    const double gdp0 = 9.5 + 0.8 * normal(rng);
    const double price0 = -1.8 + 0.2 * normal(rng);
    for (int y = 0; y < c.years; ++y) {
      const double lg = gdp0 + 0.02 * y + 0.03 * normal(rng);
      const double lp = price0 + 0.01 * y + 0.08 * normal(rng);
      e.gdp[{country_code(i), c.first_year + y}] = std::exp(lg);
      e.price[{country_code(i), c.first_year + y}] = std::exp(lp);
    }
  }
  // Centers over the rows that enter the panel (every year after the first).
  for (int i = 0; i < c.countries; ++i) {
    for (int y = 1; y < c.years; ++y) {
      s_gdp += std::log(e.gdp.at({country_code(i), c.first_year + y}));
      s_price += std::log(e.price.at({country_code(i), c.first_year + y - 1}));
      ++n;
    }
  }
  e.center_gdp = n ? s_gdp / n : 0.0;
  e.center_price = n ? s_price / n : 0.0;
  return e;
}

// Log demand by recursion from an initial year drawn around the stationary
// level of the global intercept.
SeriesTable make_energy(const DgpConfig& c, const Truth& t, const Economy& e,
                        const std::map<CountryYear, std::vector<double>>& exposure,
                        const BinScheme& scheme) {
  const auto retained = scheme.retained_bins();
  const bool slopes = c.variant == Variant::RandomSlopes;
  const bool groups = c.variant != Variant::Pooled;
  std::normal_distribution<double> normal(0.0, 1.0);
  SeriesTable energy;
  for (int i = 0; i < c.countries; ++i) {
    const auto code = country_code(i);
    CounterRng rng(c.seed, kNoise, static_cast<std::uint64_t>(i));
    double y = t.alpha / (1.0 - t.nu) + 0.2 * normal(rng);
    energy[{code, c.first_year}] = std::exp(y);
    for (int yr = 1; yr < c.years; ++yr) {
      const int year = c.first_year + yr;
      const auto& f = exposure.at({code, year});
      double mu = t.alpha + t.nu * y;
      mu += t.gamma[0] * (std::log(e.gdp.at({code, year})) - e.center_gdp);
      mu += t.gamma[1] * (std::log(e.price.at({code, year - 1})) - e.center_price);
      if (groups) mu += t.effects(i, 0);
      for (std::size_t k = 0; k < retained.size(); ++k) {
        double b = t.beta[static_cast<Eigen::Index>(k)];
        if (slopes) b += t.effects(i, static_cast<Eigen::Index>(k + 1));
        mu += b * f[retained[k]];
      }
      y = mu + t.sigma_e * normal(rng);
      energy[{code, year}] = std::exp(y);
    }
  }
  return energy;
}

double climate_mean(const DgpConfig& c, int i) {
  CounterRng rng(c.seed, kClimate, static_cast<std::uint64_t>(i));
  std::uniform_real_distribution<double> u(c.climate_min, c.climate_max);
  return u(rng);
}

}  // namespace

DgpConfig dgp_from_key_values(const std::map<std::string, std::string>& kv) {
  DgpConfig c;
  for (const auto& [key, value] : kv) {
    const std::string where = "dgp key " + key;
    auto num = [&] { return parse_double(value, where); };
    auto integer = [&] { return static_cast<int>(parse_int(value, where)); };
    if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(value, where));
    else if (key == "countries") c.countries = integer();
    else if (key == "cells_per_country") c.cells_per_country = integer();
    else if (key == "first_year") c.first_year = integer();
    else if (key == "years") c.years = integer();
    else if (key == "days_per_year") c.days_per_year = integer();
    else if (key == "width") c.width = num();
    else if (key == "variant") c.variant = parse_variant(value);
    else if (key == "alpha") c.alpha = num();
    else if (key == "nu") c.nu = num();
    else if (key == "beta_cold") c.beta_cold = num();
    else if (key == "beta_hot") c.beta_hot = num();
    else if (key == "gamma_gdp") c.gamma_gdp = num();
    else if (key == "gamma_price") c.gamma_price = num();
    else if (key == "sigma_e") c.sigma_e = num();
    else if (key == "sd_intercept") c.sd_intercept = num();
    else if (key == "sd_slope") c.sd_slope = num();
    else if (key == "climate_min") c.climate_min = num();
    else if (key == "climate_max") c.climate_max = num();
    else if (key == "climate_sd") c.climate_sd = num();
    else throw Error(ErrorCode::InvalidConfig, "unknown dgp key '" + key + "'");
  }
  if (c.countries < 1 || c.cells_per_country < 1 || c.years < 2 || c.days_per_year < 1 ||
      c.days_per_year > 365) {
    throw Error(ErrorCode::InvalidConfig, "dgp sizes out of range");
  }
  if (!(std::abs(c.nu) < 1.0) || !(c.sigma_e > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "dgp needs |nu| < 1 and sigma_e > 0");
  }
  return c;
}

DgpConfig load_dgp_config(const std::filesystem::path& path) {
  return dgp_from_key_values(read_key_values(path));
}

SimulatedWorld simulate_world(const DgpConfig& c) {
  SimulatedWorld w;
  w.scheme = make_bin_scheme(c.width);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::map<CellId, CellMeta> cells;
  std::vector<TemperatureRecord> records;
  for (int i = 0; i < c.countries; ++i) {
    const double climate = climate_mean(c, i);
    CounterRng geo(c.seed, kClimate, 1000 + static_cast<std::uint64_t>(i));
    const double lon0 = -170.0 + 340.0 * (i + 0.5) / c.countries;
    for (int j = 0; j < c.cells_per_country; ++j) {
      const CellId id = static_cast<CellId>(i) * 1000 + j;
      const double lon = lon0 + 4.0 * (unit(geo) - 0.5);
      const double lat = 45.0 - 1.5 * (climate - 10.0) + 2.0 * (unit(geo) - 0.5);
      cells[id] = {std::clamp(lat, -89.0, 89.0), lon};
      w.grid.countries.assignment[id] = country_code(i);
      const double cell_offset = 1.5 * normal(geo);
      const double pop0 = 1e4 + 1e6 * unit(geo);
      for (int yr = 0; yr < c.years; ++yr) {
        const int year = c.first_year + yr;
        w.grid.population.counts[{id, year}] = std::round(pop0 * std::pow(1.01, yr));
        CounterRng wx(c.seed, kWeather, (static_cast<std::uint64_t>(id) << 16) + yr);
        const double anomaly = 0.8 * normal(wx);
        const auto jan1 = std::chrono::sys_days(std::chrono::year(year) / 1 / 1);
        for (int d = 0; d < c.days_per_year; ++d) {
          const int doy = static_cast<int>((d + 0.5) * 365.0 / c.days_per_year);
          const double season = -9.0 * std::cos(2.0 * std::numbers::pi * doy / 365.0);
          const auto day = jan1 + std::chrono::days(doy);
          for (int h = 0; h < 24; h += 3) {
            const Timestamp ts =
                std::chrono::duration_cast<std::chrono::seconds>(day.time_since_epoch()).count() +
                3600LL * h;
            const int lh = local_hour(ts, lon);
            const double diurnal = 4.0 * std::cos(2.0 * std::numbers::pi * (lh - 15) / 24.0);
            double temp = climate + cell_offset + anomaly + season + diurnal + 1.5 * normal(wx);
            temp = std::clamp(temp, -89.0, 59.0);
            records.push_back({id, ts, std::round(temp * 100.0) / 100.0});
          }
        }
      }
    }
  }
  w.grid.temperature = TemperatureGrid::from_records(std::move(records), std::move(cells));

  for (const auto& [key, count] : w.grid.population.counts) {
    w.population[{w.grid.countries.assignment.at(key.first), key.second}] += count;
  }
  const Truth t = make_truth(c, w.scheme);
  const Economy e = make_economy(c);
  w.gdp = e.gdp;
  w.price = e.price;
  const ExposureTable exposure =
      compute_exposure(w.grid.temperature, w.grid.population, w.grid.countries, w.scheme);
  w.energy = make_energy(c, t, e, exposure.values, w.scheme);
  w.truth = truth_labels(t, w.scheme, c.countries);
  return w;
}

void write_world(const SimulatedWorld& w, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_grid_dir(w.grid, dir);
  write_series_csv(w.energy, dir / world_files::kEnergy);
  write_series_csv(w.gdp, dir / world_files::kGdp);
  write_series_csv(w.price, dir / world_files::kPrice);
  write_series_csv(w.population, dir / world_files::kPopulationTotals);
  std::ofstream out(dir / world_files::kTruth);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot write truth file in " + dir.string());
  out << "label,value\n";
  for (const auto& [label, value] : w.truth) out << label << ',' << format_double(value) << '\n';
}

SimulatedDesign simulate_design(const DgpConfig& c) {
  SimulatedDesign s;
  s.scheme = make_bin_scheme(c.width);
  const auto K = s.scheme.bin_count();
  std::map<CountryYear, std::vector<double>> exposure;
  const boost::math::normal_distribution<double> std_normal;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < c.countries; ++i) {
    const double climate = climate_mean(c, i);
    CounterRng wx(c.seed, kWeather, static_cast<std::uint64_t>(i));
    for (int yr = 0; yr < c.years; ++yr) {
      const double m = climate + 1.0 * normal(wx);
      std::vector<double> f(K);
      double prev = 0.0;
      for (std::size_t k = 0; k + 1 < K; ++k) {
        const double cdf = boost::math::cdf(std_normal, (s.scheme.bin_hi(k) - m) / c.climate_sd);
        f[k] = cdf - prev;
        prev = cdf;
      }
      f[K - 1] = 1.0 - prev;
      exposure[{country_code(i), c.first_year + yr}] = std::move(f);
    }
  }
  const Truth t = make_truth(c, s.scheme);
  const Economy e = make_economy(c);
  const SeriesTable energy = make_energy(c, t, e, exposure, s.scheme);
  ExposureTable table;
  table.edges = s.scheme.edges;
  table.values = std::move(exposure);
  s.panel = assemble_panel(energy, e.gdp, e.price, table);
  s.design = build_design(s.panel, s.scheme);
  s.truth = truth_labels(t, s.scheme, c.countries);
  return s;
}

}  // namespace thermopool
