#ifndef THERMOPOOL_DIAGNOSTICS_HPP
#define THERMOPOOL_DIAGNOSTICS_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "thermopool/draws.hpp"
#include "thermopool/inference.hpp"

namespace thermopool {

/// Type-7 quantile of an ascending sequence.
double quantile_sorted(const std::vector<double>& sorted, double p);

/// Rank-normalized split R-hat, max of the bulk and folded versions.
/// `draws` is iterations x chains. Throws ZeroVariance for constant draws.
double split_rhat(const Eigen::MatrixXd& draws);

/// Bulk effective sample size: rank-normalized split chains, multi-chain
/// autocorrelations truncated by Geyer's initial monotone sequence.
double ess_bulk(const Eigen::MatrixXd& draws);

/// Effective sample size of the draws as given (split, no rank transform).
double ess_basic(const Eigen::MatrixXd& draws);

struct ParameterDiagnostics {
  std::string label;
  double rhat = 0.0;
  double ess_bulk = 0.0;
};

/// R-hat and bulk ESS for every column; NaN for constant columns.
std::vector<ParameterDiagnostics> diagnose_all(const PosteriorDraws& draws);

struct ParetoFit {
  double k = 0.0;
  double sigma = 0.0;
};

/// Zhang-Stephens generalized Pareto fit of ascending exceedances, with the
/// weakly informative shrinkage of k towards 0.5.
ParetoFit gpd_fit(const std::vector<double>& sorted_exceedances);

struct SmoothedWeights {
  std::vector<double> log_weights;  // unnormalized
  double pareto_k = 0.0;
};

/// Pareto-smooths the largest ceil(0.2 S) log importance ratios.
SmoothedWeights psis_smooth(const std::vector<double>& log_ratios);

struct LooResult {
  double elpd = 0.0;
  double se = 0.0;
  Eigen::VectorXd pointwise;
  Eigen::VectorXd pareto_k;

  std::size_t n_high_k(double threshold = 0.7) const;
};

/// PSIS-LOO from an S x n matrix of pointwise log likelihoods.
/// Throws AllRatiosDegenerate when an observation has a non-finite value.
LooResult psis_loo(const Eigen::MatrixXd& loglik);

/// S x n pointwise log-likelihood matrix of a fitted model.
Eigen::MatrixXd loglik_matrix(const PosteriorDraws& draws, const DesignMatrix& design,
                              const ModelSpec& spec);

LooResult psis_loo(const PosteriorDraws& draws, const DesignMatrix& design,
                   const ModelSpec& spec);

struct ElpdDifference {
  double diff = 0.0;  // elpd(a) - elpd(b)
  double se = 0.0;    // from paired pointwise differences
};

ElpdDifference elpd_difference(const LooResult& a, const LooResult& b);

struct ComparisonRow {
  std::string name;
  double elpd = 0.0;
  double se = 0.0;
  double elpd_diff = 0.0;  // relative to the best model, <= 0
  double se_diff = 0.0;
};

struct NamedLoo {
  std::string name;
  LooResult loo;
};

/// Best model first; ties are broken by name. Throws MismatchedObservations.
std::vector<ComparisonRow> compare_models(const std::vector<NamedLoo>& results);

enum class PredictiveMode { Prior, Posterior };

struct PredictiveSummary {
  Eigen::MatrixXd replicates;  // n_reps x n
  Eigen::VectorXd lower;       // 2.5% per observation
  Eigen::VectorXd median;
  Eigen::VectorXd upper;       // 97.5%
  double coverage = 0.0;       // share of observations inside [lower, upper]
  double ks_statistic = 0.0;   // observed vs pooled replicates
  double observed_min = 0.0, observed_max = 0.0;
  double replicated_min = 0.0, replicated_max = 0.0;
};

/// Replicated responses given the observed lags and regressors. Posterior
/// mode needs `draws`; prior mode draws parameters from spec.prior.
PredictiveSummary predictive_simulate(const PosteriorDraws* draws, const DesignMatrix& design,
                                      const ModelSpec& spec, PredictiveMode mode,
                                      std::size_t n_reps, std::uint64_t seed);

}  // namespace thermopool

#endif  // THERMOPOOL_DIAGNOSTICS_HPP
