#include "support.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace thermopool::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static int counter = 0;
  std::random_device rd;
  path_ = fs::temp_directory_path() /
          ("thermopool-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Timestamp utc_time(int year, unsigned month, unsigned day, int hour) {
  using namespace std::chrono;
  const sys_days d = std::chrono::year(year) / month / day;
  return duration_cast<seconds>(d.time_since_epoch()).count() + 3600LL * hour;
}

GridBundle random_grid(const RandomGridOptions& o, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> lon(-180.0, 180.0), lat(-60.0, 70.0), u(0.0, 1.0);
  std::uniform_real_distribution<double> temp(o.temp_mean - o.temp_spread,
                                              o.temp_mean + o.temp_spread);
  GridBundle g;
  std::map<CellId, CellMeta> cells;
  std::vector<TemperatureRecord> records;
  for (int c = 0; c < o.cells; ++c) {
    const CellId id = 100 + c;
    cells[id] = {lat(rng), lon(rng)};
    g.countries.assignment[id] = "K" + std::to_string(c % o.countries);
    for (int y = 0; y < o.years; ++y) {
      const int year = o.first_year + y;
      g.population.counts[{id, year}] = 1.0 + std::floor(1e5 * u(rng));
      const Timestamp start = utc_time(year, 1, 1);
      for (int d = 0; d < o.days_per_year; ++d) {
        for (int h = 0; h < 24; h += 3) {
          const double t = std::round(temp(rng) * 100.0) / 100.0;
          records.push_back({id, start + 86400LL * d + 3600LL * h, t});
        }
      }
    }
  }
  g.temperature = TemperatureGrid::from_records(std::move(records), std::move(cells));
  return g;
}

DesignMatrix random_design(std::size_t countries, std::size_t years, std::size_t k_eff,
                           std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::gamma_distribution<double> gam(1.0, 1.0);
  const std::size_t n = countries * years;
  DesignMatrix d;
  d.response.resize(static_cast<Eigen::Index>(n));
  d.lag.resize(static_cast<Eigen::Index>(n));
  d.exposure.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k_eff));
  d.covariates.resize(static_cast<Eigen::Index>(n), 2);
  d.covariate_centers = Eigen::VectorXd::Zero(2);
  d.reference_mass.resize(static_cast<Eigen::Index>(n));
  for (std::size_t c = 0; c < countries; ++c) d.groups.push_back("K" + std::to_string(c));
  for (std::size_t k = 0; k < k_eff; ++k) d.exposure_labels.push_back("b" + std::to_string(k));
  d.covariate_labels = {"log_gdp", "log_price_lag1"};
  for (std::size_t k = 0; k < k_eff; ++k) d.retained_bins.push_back(k);
  d.reference_bins = {k_eff};
  std::size_t r = 0;
  for (std::size_t c = 0; c < countries; ++c) {
    for (std::size_t y = 0; y < years; ++y, ++r) {
      const auto i = static_cast<Eigen::Index>(r);
      std::vector<double> shares(k_eff + 1);
      double total = 0.0;
      for (auto& s : shares) total += (s = gam(rng));
      for (std::size_t k = 0; k < k_eff; ++k) {
        d.exposure(i, static_cast<Eigen::Index>(k)) = shares[k] / total;
      }
      d.reference_mass[i] = shares[k_eff] / total;
      d.lag[i] = 2.0 + 0.5 * n01(rng);
      d.covariates(i, 0) = 0.7 * n01(rng);
      d.covariates(i, 1) = 0.3 * n01(rng);
      d.response[i] = 1.0 + 0.5 * d.lag[i] + 0.2 * n01(rng);
      d.group.push_back(static_cast<int>(c));
      d.year.push_back(2000 + static_cast<int>(y));
    }
  }
  d.finalize();
  return d;
}

fs::path cli_path() { return THERMOPOOL_CLI_PATH; }

int run_cli(const std::string& args, const fs::path& log, const fs::path& cwd) {
  const std::string cd = cwd.empty() ? "" : "cd \"" + cwd.string() + "\" && ";
  const std::string cmd = cd + "\"" + cli_path().string() + "\" " + args + " > \"" + log.string() +
                          "\" 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

}  // namespace thermopool::testing
