#ifndef THERMOPOOL_TESTS_SUPPORT_HPP
#define THERMOPOOL_TESTS_SUPPORT_HPP

// Shared fixtures for the unit and acceptance tests.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "thermopool/exposure.hpp"
#include "thermopool/gridio.hpp"
#include "thermopool/panel.hpp"

namespace thermopool::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

Timestamp utc_time(int year, unsigned month, unsigned day, int hour = 0);

struct RandomGridOptions {
  int countries = 3;
  int cells = 12;          // spread round-robin over the countries
  int first_year = 2000;
  int years = 2;
  int days_per_year = 365; // days sampled from the start of each year
  double temp_mean = 12.0;
  double temp_spread = 14.0;
};

/// Three-hourly uniform-random temperatures, random populations and lons.
GridBundle random_grid(const RandomGridOptions& options, std::mt19937_64& rng);

/// Small hand-sized design with random exposure shares and covariates.
DesignMatrix random_design(std::size_t countries, std::size_t years_per_country,
                           std::size_t k_eff, std::mt19937_64& rng);

/// Central finite-difference gradient.
template <class F>
Eigen::VectorXd numeric_gradient(F&& f, const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x, xm = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
    xp[i] = xm[i] = x[i];
  }
  return g;
}

/// Path of the command-line tool under test.
std::filesystem::path cli_path();

/// Runs the tool with `args` (shell-quoted by the caller) from `cwd`, with
/// stdout and stderr sent to `log`. Returns the exit code.
int run_cli(const std::string& args, const std::filesystem::path& log,
            const std::filesystem::path& cwd = {});

}  // namespace thermopool::testing

#endif  // THERMOPOOL_TESTS_SUPPORT_HPP
