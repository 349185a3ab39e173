#ifndef THERMOPOOL_REPORT_HPP
#define THERMOPOOL_REPORT_HPP

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "thermopool/draws.hpp"
#include "thermopool/exposure.hpp"
#include "thermopool/inference.hpp"
#include "thermopool/panel.hpp"
#include "thermopool/sampler.hpp"

namespace thermopool {

struct SummaryRow {
  std::string label;
  double rhat = 0.0;  // NaN when undefined (one chain, constant draws)
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double median = 0.0;
  double q975 = 0.0;
};

using SummaryTable = std::vector<SummaryRow>;

/// Per-parameter R-hat, mean, sd and type-7 quantiles. Throws EmptyDraws.
SummaryTable summarize(const PosteriorDraws& draws);

/// Same statistics for a plain sample (no R-hat).
SummaryRow summarize_values(std::string label, std::vector<double> values);

void write_summary_csv(const SummaryTable& table, const std::filesystem::path& path);
SummaryTable read_summary_csv(const std::filesystem::path& path);

/// effect / (1 - nu); throws NonStationary when |nu| >= 1.
double koyck_long_run(double effect, double nu);

struct LongRunShift {
  double long_run = 0.0;     // beta / (1 - nu)
  double percent = 0.0;      // 100 * delta * beta / (1 - nu)
  double percent_exact = 0.0;  // 100 * expm1(delta * beta / (1 - nu))
};

/// Long-run demand response to moving `delta` (a share, 0.10 for ten
/// percentage points) of exposure into a bin with coefficient beta.
LongRunShift long_run_shift(double beta, double nu, double delta);

struct LongRunRow {
  std::string label;  // beta label
  double short_run_mean = 0.0;
  SummaryRow long_run;  // over stationary draws
  LongRunShift at_means;  // from posterior means of beta and nu
};

/// Long-run temperature effects for every beta column.
std::vector<LongRunRow> temperature_long_run(const PosteriorDraws& draws, double delta = 0.10);
void write_long_run_csv(const std::vector<LongRunRow>& rows, double delta,
                        const std::filesystem::path& path);

struct ElasticityRow {
  std::string covariate;
  SummaryRow short_run;
  SummaryRow long_run;
};

struct ElasticityTable {
  std::vector<ElasticityRow> rows;
  std::size_t excluded_nonstationary = 0;
};

/// Short-run gamma and long-run gamma / (1 - nu), draw by draw. Draws with
/// |nu| >= 1 are left out of the long-run column and counted.
ElasticityTable elasticity_table(const PosteriorDraws& draws);
void write_elasticities_csv(const ElasticityTable& table, const std::filesystem::path& path);

struct CountryChange {
  std::string country;
  double baseline = 0.0;        // exp(mu) at baseline exposure
  double counterfactual = 0.0;  // exp(mu) at shifted exposure
  double pct_change = 0.0;
  double pct_lower = 0.0;  // full-posterior mode only
  double pct_upper = 0.0;
};

struct CounterfactualResult {
  double delta_t = 0.0;
  int base_year = 0;
  std::vector<CountryChange> countries;
  double total_baseline = 0.0;
  double total_counterfactual = 0.0;
  double total_pct = 0.0;  // 100 * (sum counterfactual / sum baseline - 1)
  bool full_posterior = false;
};

/// Predicted demand in base_year with every temperature shifted by delta_t,
/// using posterior mean parameters including country deviations. Countries
/// need a panel row in base_year for their lag and covariates. Throws
/// YearNotCovered when base_year is missing from either grid or the panel.
CounterfactualResult warming_counterfactual(const PosteriorDraws& draws, const TemperatureGrid& tg,
                                            const PopulationGrid& pg, const CountryMap& cm,
                                            const BinScheme& scheme, const PanelDataset& panel,
                                            const DesignMatrix& design, const ModelSpec& spec,
                                            double delta_t, int base_year,
                                            bool full_posterior = false);

void write_counterfactual_csv(const CounterfactualResult& result,
                              const std::filesystem::path& path);

struct RollingOptions {
  int window = 15;
  std::size_t warm_warmup = 200;  // warmup length once tuning is inherited
};

struct WindowFit {
  int first_year = 0;
  int last_year = 0;
  SummaryTable summary;  // global parameters only
  std::size_t divergences = 0;
};

/// Number of windows of `window` years in [first, last]; throws WindowTooWide.
int window_count(int first_year, int last_year, int window);

/// Refits the model on every contiguous window, sliding one year at a time.
/// Each fit after the first starts from the previous one's tuning.
std::vector<WindowFit> rolling_windows(const PanelDataset& panel, const BinScheme& scheme,
                                       Variant variant, PriorPreset preset, double lkj_eta,
                                       const SamplerConfig& config, const RollingOptions& options,
                                       const std::function<void(const WindowFit&)>& progress = {});

/// window_first,window_last,label,rhat,mean,sd,q2.5,median,q97.5
void write_windows_csv(const std::vector<WindowFit>& fits, const std::filesystem::path& path);

}  // namespace thermopool

#endif  // THERMOPOOL_REPORT_HPP
