#ifndef THERMOPOOL_INFERENCE_HPP
#define THERMOPOOL_INFERENCE_HPP

#include <Eigen/Dense>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "thermopool/panel.hpp"

namespace thermopool {

enum class Variant { RandomSlopes, RandomIntercepts, Pooled };

std::string to_string(Variant v);
Variant parse_variant(std::string_view text);  // "slopes", "intercepts", "pooled"

enum class PriorPreset { Default, VShape, HockeyStick, TightGroup, Wide };

std::string to_string(PriorPreset p);
PriorPreset parse_prior_preset(std::string_view text);  // default|vshape|hockey|tight|wide

struct PriorConfig {
  PriorPreset preset = PriorPreset::Default;
  double alpha_mean = 0.0;
  double alpha_sd = 1.0;
  double nu_mean = 0.0;
  double nu_sd = 1.0;
  Eigen::VectorXd beta_means;
  Eigen::VectorXd beta_sds;
  Eigen::VectorXd gamma_means;
  Eigen::VectorXd gamma_sds;
  double group_sd_scale = 1.0;  // half-normal scale of each group sd
  double sigma_e_df = 3.0;
  double sigma_e_scale = 1.0;   // half-t scale of the residual sd
};

/// max(1, 2.5 * median absolute deviation of the response), unscaled MAD.
double default_sigma_e_scale(const Eigen::VectorXd& response);

/// Builds the prior for a design. VShape centres each beta at 0.5 per bin
/// step away from the nearest reference bin on both sides, HockeyStick on the
/// cold side only, TightGroup shrinks group sds (scale 0.1), Wide uses sd 10
/// for every location parameter.
PriorConfig make_prior(PriorPreset preset, const DesignMatrix& design);

struct ModelSpec {
  Variant variant = Variant::RandomSlopes;
  std::size_t k_eff = 0;
  std::size_t n_cov = 0;
  std::size_t n_groups = 0;
  PriorConfig prior;
  double lkj_eta = 2.0;
  double likelihood_weight = 1.0;  // 0 samples the prior

  /// Width of a country's deviation vector: K_eff + 1, 1 or 0.
  std::size_t group_dim() const;
};

ModelSpec make_model_spec(Variant variant, const DesignMatrix& design,
                          PriorPreset preset = PriorPreset::Default, double lkj_eta = 2.0);

/// Offsets into the unconstrained vector (u) and the constrained output row.
///
/// u:    alpha, nu, beta[K], gamma[L], log sigma_e, log sd[D], chol[D(D-1)/2], z[N*D]
/// row:  alpha, nu, beta[K], gamma[L], sigma_e, sd[D], cor[D(D-1)/2], r[N*D]
///
/// z and r are stored group-major (all D entries of country 0 first).
struct ParameterLayout {
  std::size_t k = 0, l = 0, d = 0, n = 0;
  std::size_t alpha = 0, nu = 1, beta = 2, gamma = 0, sigma_e = 0, sd = 0, chol = 0,
              z = 0, dim = 0;
  std::size_t constrained_dim = 0;
  std::vector<std::string> labels;  // constrained row labels

  std::size_t n_chol() const { return d * (d - 1) / 2; }
  std::size_t index_of(std::string_view label) const;  // throws InvalidConfig
};

ParameterLayout make_layout(const ModelSpec& spec, const DesignMatrix& design);

struct ConstrainedParams {
  double alpha = 0.0;
  double nu = 0.0;
  Eigen::VectorXd beta;
  Eigen::VectorXd gamma;
  double sigma_e = 1.0;
  Eigen::VectorXd sd;  // group sds (length D)
  Eigen::MatrixXd L;   // D x D Cholesky factor of the correlation matrix
  Eigen::MatrixXd Z;   // N x D standardized deviates

  /// N x D matrix whose row g is (diag(sd) L z_g)^T.
  Eigen::MatrixXd group_effects() const;
};

ConstrainedParams transform(const Eigen::VectorXd& u, const ParameterLayout& layout,
                            double* log_jacobian = nullptr);
Eigen::VectorXd inverse_transform(const ConstrainedParams& p, const ParameterLayout& layout);

/// Flat constrained row matching layout.labels.
Eigen::VectorXd constrained_row(const ConstrainedParams& p, const ParameterLayout& layout);

/// Unconstrained correlation-Cholesky map: tanh onto (-1, 1), then each row
/// is filled so that it has unit norm. Returns the factor and adds the log
/// absolute Jacobian to *lp.
Eigen::MatrixXd cholesky_corr_constrain(const Eigen::VectorXd& y, std::size_t dim,
                                        double* lp = nullptr);
Eigen::VectorXd cholesky_corr_free(const Eigen::MatrixXd& L);

/// sum_{i=1}^{D-1} (D - i - 3 + 2 eta) log L_ii. The normalizing constant of
/// the LKJ distribution is dropped, so the identity scores 0 for every eta.
/// Throws InvalidCholesky if L is not lower triangular with unit-norm rows
/// and a positive diagonal.
double lkj_cholesky_logdensity(const Eigen::MatrixXd& L, double eta);

/// Log joint density in unconstrained coordinates, Jacobian terms included.
/// Non-finite values come back as -infinity; nothing throws for bad points.
double log_posterior(const Eigen::VectorXd& u, const DesignMatrix& design,
                     const ModelSpec& spec);

/// Same value; fills `grad` (resized to u.size()).
double log_posterior_grad(const Eigen::VectorXd& u, const DesignMatrix& design,
                          const ModelSpec& spec, Eigen::VectorXd& grad);

/// Linear predictor for every design row from a constrained row.
Eigen::VectorXd linear_predictor(const Eigen::VectorXd& row, const ParameterLayout& layout,
                                 const DesignMatrix& design);

/// Per-observation Gaussian log likelihood from a constrained row.
Eigen::VectorXd pointwise_loglik(const Eigen::VectorXd& row, const ParameterLayout& layout,
                                 const DesignMatrix& design);

/// One draw of every parameter from the prior (LKJ via partial correlations).
ConstrainedParams sample_prior(const ModelSpec& spec, const ParameterLayout& layout,
                               std::mt19937_64& rng);

/// Cholesky factor from canonical partial correlations, ordered row by row of
/// the strictly upper triangle.
Eigen::MatrixXd read_corr_L(const Eigen::VectorXd& cpcs, std::size_t dim);

}  // namespace thermopool

#endif  // THERMOPOOL_INFERENCE_HPP
