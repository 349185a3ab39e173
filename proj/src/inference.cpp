#include "thermopool/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "thermopool/error.hpp"

namespace thermopool {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double normal_lpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -kHalfLog2Pi - std::log(sd) - 0.5 * z * z;
}

double student_t_lpdf(double x, double df, double scale) {
  const double z = x / scale;
  return std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) -
         0.5 * std::log(df * std::numbers::pi) - std::log(scale) -
         0.5 * (df + 1.0) * std::log1p(z * z / df);
}

// log(1 - tanh(y)^2), stable for large |y|.
double log1m_tanh_sq(double y) {
  const double a = std::abs(y);
  return 2.0 * (std::numbers::ln2 - a - std::log1p(std::exp(-2.0 * a)));
}

double median(std::vector<double> v) {
  const auto n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::RandomSlopes: return "slopes";
    case Variant::RandomIntercepts: return "intercepts";
    case Variant::Pooled: return "pooled";
  }
  return "unknown";
}

Variant parse_variant(std::string_view text) {
  if (text == "slopes" || text == "random_slopes") return Variant::RandomSlopes;
  if (text == "intercepts" || text == "random_intercepts") return Variant::RandomIntercepts;
  if (text == "pooled") return Variant::Pooled;
  throw Error(ErrorCode::InvalidConfig, "unknown variant '" + std::string(text) + "'");
}

std::string to_string(PriorPreset p) {
  switch (p) {
    case PriorPreset::Default: return "default";
    case PriorPreset::VShape: return "vshape";
    case PriorPreset::HockeyStick: return "hockey";
    case PriorPreset::TightGroup: return "tight";
    case PriorPreset::Wide: return "wide";
  }
  return "unknown";
}

PriorPreset parse_prior_preset(std::string_view text) {
  if (text == "default") return PriorPreset::Default;
  if (text == "vshape") return PriorPreset::VShape;
  if (text == "hockey") return PriorPreset::HockeyStick;
  if (text == "tight") return PriorPreset::TightGroup;
  if (text == "wide") return PriorPreset::Wide;
  throw Error(ErrorCode::InvalidConfig, "unknown prior preset '" + std::string(text) + "'");
}

double default_sigma_e_scale(const Eigen::VectorXd& response) {
  if (response.size() == 0) return 1.0;
  std::vector<double> v(response.data(), response.data() + response.size());
  const double m = median(v);
  for (auto& x : v) x = std::abs(x - m);
  return std::max(1.0, 2.5 * median(std::move(v)));
}

PriorConfig make_prior(PriorPreset preset, const DesignMatrix& design) {
  PriorConfig p;
  p.preset = preset;
  const auto k = static_cast<Eigen::Index>(design.k_eff());
  const auto l = static_cast<Eigen::Index>(design.n_covariates());
  p.beta_means = Eigen::VectorXd::Zero(k);
  p.beta_sds = Eigen::VectorXd::Ones(k);
  p.gamma_means = Eigen::VectorXd::Zero(l);
  p.gamma_sds = Eigen::VectorXd::Ones(l);
  p.sigma_e_scale = default_sigma_e_scale(design.response);

  const bool shaped = preset == PriorPreset::VShape || preset == PriorPreset::HockeyStick;
  if (shaped && !design.reference_bins.empty() &&
      design.retained_bins.size() == static_cast<std::size_t>(k)) {
    const auto ref_lo = static_cast<double>(design.reference_bins.front());
    const auto ref_hi = static_cast<double>(design.reference_bins.back());
    for (Eigen::Index c = 0; c < k; ++c) {
      const auto bin = static_cast<double>(design.retained_bins[static_cast<std::size_t>(c)]);
      if (bin < ref_lo) {
        p.beta_means[c] = 0.5 * (ref_lo - bin);
      } else if (bin > ref_hi && preset == PriorPreset::VShape) {
        p.beta_means[c] = 0.5 * (bin - ref_hi);
      }
    }
  }
  if (preset == PriorPreset::TightGroup) p.group_sd_scale = 0.1;
  if (preset == PriorPreset::Wide) {
    p.alpha_sd = p.nu_sd = 10.0;
    p.beta_sds.setConstant(10.0);
    p.gamma_sds.setConstant(10.0);
  }
  return p;
}

std::size_t ModelSpec::group_dim() const {
  switch (variant) {
    case Variant::RandomSlopes: return k_eff + 1;
    case Variant::RandomIntercepts: return 1;
    case Variant::Pooled: return 0;
  }
  return 0;
}

ModelSpec make_model_spec(Variant variant, const DesignMatrix& design, PriorPreset preset,
                          double lkj_eta) {
  ModelSpec spec;
  spec.variant = variant;
  spec.k_eff = design.k_eff();
  spec.n_cov = design.n_covariates();
  spec.n_groups = design.n_groups();
  spec.prior = make_prior(preset, design);
  spec.lkj_eta = lkj_eta;
  return spec;
}

namespace {

void check_dims(const ModelSpec& spec, const DesignMatrix& design) {
  if (design.k_eff() != spec.k_eff || design.n_covariates() != spec.n_cov ||
      design.n_groups() != spec.n_groups) {
    throw Error(ErrorCode::DimensionMismatch, "model spec does not match the design");
  }
}

ParameterLayout offsets(const ModelSpec& spec) {
  ParameterLayout p;
  p.k = spec.k_eff;
  p.l = spec.n_cov;
  p.d = spec.group_dim();
  p.n = p.d ? spec.n_groups : 0;
  p.gamma = p.beta + p.k;
  p.sigma_e = p.gamma + p.l;
  p.sd = p.sigma_e + 1;
  p.chol = p.sd + p.d;
  p.z = p.chol + p.n_chol();
  p.dim = p.z + p.n * p.d;
  p.constrained_dim = p.dim;
  return p;
}

}  // namespace

ParameterLayout make_layout(const ModelSpec& spec, const DesignMatrix& design) {
  check_dims(spec, design);
  ParameterLayout p = offsets(spec);
  std::vector<std::string> coef{"Intercept"};
  for (std::size_t c = 0; c < p.k; ++c) {
    coef.push_back(c < design.exposure_labels.size() ? design.exposure_labels[c]
                                                     : "b" + std::to_string(c));
  }
  auto& lab = p.labels;
  lab.push_back("alpha");
  lab.push_back("nu");
  for (std::size_t c = 0; c < p.k; ++c) lab.push_back("beta[" + coef[c + 1] + "]");
  for (std::size_t c = 0; c < p.l; ++c) {
    lab.push_back("gamma[" +
                  (c < design.covariate_labels.size() ? design.covariate_labels[c]
                                                      : "x" + std::to_string(c)) +
                  "]");
  }
  lab.push_back("sigma_e");
  for (std::size_t j = 0; j < p.d; ++j) lab.push_back("sd[" + coef[j] + "]");
  for (std::size_t i = 1; i < p.d; ++i) {
    for (std::size_t j = 0; j < i; ++j) lab.push_back("cor[" + coef[j] + "|" + coef[i] + "]");
  }
  for (std::size_t g = 0; g < p.n; ++g) {
    for (std::size_t j = 0; j < p.d; ++j) {
      lab.push_back("r[" + design.groups[g] + "|" + coef[j] + "]");
    }
  }
  return p;
}

std::size_t ParameterLayout::index_of(std::string_view label) const {
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) {
    throw Error(ErrorCode::InvalidConfig, "no parameter named " + std::string(label));
  }
  return static_cast<std::size_t>(it - labels.begin());
}

Eigen::MatrixXd ConstrainedParams::group_effects() const {
  if (sd.size() == 0) return Eigen::MatrixXd(Z.rows(), 0);
  const Eigen::MatrixXd M = sd.asDiagonal() * L;
  return Z * M.transpose();
}

Eigen::MatrixXd cholesky_corr_constrain(const Eigen::VectorXd& y, std::size_t dim,
                                        double* lp) {
  const auto D = static_cast<Eigen::Index>(dim);
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(D, D);
  if (D == 0) return L;
  L(0, 0) = 1.0;
  double acc = 0.0;
  Eigen::Index k = 0;
  for (Eigen::Index i = 1; i < D; ++i) {
    double z = std::tanh(y[k]);
    acc += log1m_tanh_sq(y[k]);
    ++k;
    L(i, 0) = z;
    double sum_sqs = z * z;
    for (Eigen::Index j = 1; j < i; ++j) {
      acc += 0.5 * std::log1p(-sum_sqs);
      z = std::tanh(y[k]);
      acc += log1m_tanh_sq(y[k]);
      ++k;
      L(i, j) = z * std::sqrt(1.0 - sum_sqs);
      sum_sqs += L(i, j) * L(i, j);
    }
    L(i, i) = std::sqrt(std::max(0.0, 1.0 - sum_sqs));
  }
  if (lp) *lp += acc;
  return L;
}

Eigen::VectorXd cholesky_corr_free(const Eigen::MatrixXd& L) {
  const auto D = L.rows();
  Eigen::VectorXd y(D * (D - 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 1; i < D; ++i) {
    y[k++] = std::atanh(L(i, 0));
    double sum_sqs = L(i, 0) * L(i, 0);
    for (Eigen::Index j = 1; j < i; ++j) {
      y[k++] = std::atanh(L(i, j) / std::sqrt(1.0 - sum_sqs));
      sum_sqs += L(i, j) * L(i, j);
    }
  }
  return y;
}

double lkj_cholesky_logdensity(const Eigen::MatrixXd& L, double eta) {
  const auto D = L.rows();
  if (L.cols() != D) throw Error(ErrorCode::InvalidCholesky, "factor is not square");
  for (Eigen::Index i = 0; i < D; ++i) {
    if (!(L(i, i) > 0.0)) throw Error(ErrorCode::InvalidCholesky, "non-positive diagonal");
    for (Eigen::Index j = i + 1; j < D; ++j) {
      if (L(i, j) != 0.0) throw Error(ErrorCode::InvalidCholesky, "not lower triangular");
    }
    if (std::abs(L.row(i).squaredNorm() - 1.0) > 1e-8) {
      throw Error(ErrorCode::InvalidCholesky, "row " + std::to_string(i) + " is not unit norm");
    }
  }
  double lp = 0.0;
  for (Eigen::Index i = 1; i < D; ++i) {
    lp += (static_cast<double>(D - i) - 3.0 + 2.0 * eta) * std::log(L(i, i));
  }
  return lp;
}

ConstrainedParams transform(const Eigen::VectorXd& u, const ParameterLayout& lay,
                            double* log_jacobian) {
  ConstrainedParams p;
  double lj = 0.0;
  p.alpha = u[static_cast<Eigen::Index>(lay.alpha)];
  p.nu = u[static_cast<Eigen::Index>(lay.nu)];
  p.beta = u.segment(static_cast<Eigen::Index>(lay.beta), static_cast<Eigen::Index>(lay.k));
  p.gamma = u.segment(static_cast<Eigen::Index>(lay.gamma), static_cast<Eigen::Index>(lay.l));
  const double ls = u[static_cast<Eigen::Index>(lay.sigma_e)];
  p.sigma_e = std::exp(ls);
  lj += ls;
  const auto D = static_cast<Eigen::Index>(lay.d);
  const Eigen::VectorXd lsd = u.segment(static_cast<Eigen::Index>(lay.sd), D);
  p.sd = lsd.array().exp();
  lj += lsd.sum();
  p.L = cholesky_corr_constrain(
      u.segment(static_cast<Eigen::Index>(lay.chol), static_cast<Eigen::Index>(lay.n_chol())),
      lay.d, &lj);
  p.Z.resize(static_cast<Eigen::Index>(lay.n), D);
  for (Eigen::Index g = 0; g < p.Z.rows(); ++g) {
    p.Z.row(g) = u.segment(static_cast<Eigen::Index>(lay.z) + g * D, D).transpose();
  }
  if (log_jacobian) *log_jacobian = lj;
  return p;
}

Eigen::VectorXd inverse_transform(const ConstrainedParams& p, const ParameterLayout& lay) {
  Eigen::VectorXd u(static_cast<Eigen::Index>(lay.dim));
  u[static_cast<Eigen::Index>(lay.alpha)] = p.alpha;
  u[static_cast<Eigen::Index>(lay.nu)] = p.nu;
  u.segment(static_cast<Eigen::Index>(lay.beta), p.beta.size()) = p.beta;
  u.segment(static_cast<Eigen::Index>(lay.gamma), p.gamma.size()) = p.gamma;
  u[static_cast<Eigen::Index>(lay.sigma_e)] = std::log(p.sigma_e);
  const auto D = static_cast<Eigen::Index>(lay.d);
  u.segment(static_cast<Eigen::Index>(lay.sd), D) = p.sd.array().log();
  u.segment(static_cast<Eigen::Index>(lay.chol), static_cast<Eigen::Index>(lay.n_chol())) =
      cholesky_corr_free(p.L);
  for (Eigen::Index g = 0; g < p.Z.rows(); ++g) {
    u.segment(static_cast<Eigen::Index>(lay.z) + g * D, D) = p.Z.row(g).transpose();
  }
  return u;
}

Eigen::VectorXd constrained_row(const ConstrainedParams& p, const ParameterLayout& lay) {
  Eigen::VectorXd row(static_cast<Eigen::Index>(lay.constrained_dim));
  Eigen::Index k = 0;
  row[k++] = p.alpha;
  row[k++] = p.nu;
  for (Eigen::Index c = 0; c < p.beta.size(); ++c) row[k++] = p.beta[c];
  for (Eigen::Index c = 0; c < p.gamma.size(); ++c) row[k++] = p.gamma[c];
  row[k++] = p.sigma_e;
  for (Eigen::Index j = 0; j < p.sd.size(); ++j) row[k++] = p.sd[j];
  const auto D = static_cast<Eigen::Index>(lay.d);
  if (D > 1) {
    const Eigen::MatrixXd R = p.L * p.L.transpose();
    for (Eigen::Index i = 1; i < D; ++i) {
      for (Eigen::Index j = 0; j < i; ++j) row[k++] = R(i, j);
    }
  }
  if (D > 0) {
    const Eigen::MatrixXd B = p.group_effects();
    for (Eigen::Index g = 0; g < B.rows(); ++g) {
      for (Eigen::Index j = 0; j < D; ++j) row[k++] = B(g, j);
    }
  }
  return row;
}

namespace {

// Adjoint of cholesky_corr_constrain (including its log Jacobian) with
// respect to y, given the adjoint aL of the factor.
void cholesky_corr_backprop(const Eigen::VectorXd& y, const Eigen::MatrixXd& L,
                            const Eigen::MatrixXd& aL, Eigen::Ref<Eigen::VectorXd> ay) {
  const auto D = L.rows();
  Eigen::Index offset = 0;
  for (Eigen::Index i = 1; i < D; ++i) {
    // Row i uses y[offset .. offset + i).
    std::vector<double> z(static_cast<std::size_t>(i)), s(static_cast<std::size_t>(i));
    for (Eigen::Index j = 0; j < i; ++j) {
      z[static_cast<std::size_t>(j)] = std::tanh(y[offset + j]);
      const double prev = j ? s[static_cast<std::size_t>(j - 1)] : 0.0;
      s[static_cast<std::size_t>(j)] = prev + L(i, j) * L(i, j);
    }
    std::vector<double> az(static_cast<std::size_t>(i), 0.0);
    // Diagonal: L_ii = sqrt(1 - s_{i-1}).
    double a_s = L(i, i) > 0.0 ? aL(i, i) * (-0.5 / L(i, i)) : 0.0;
    for (Eigen::Index j = i - 1; j >= 1; --j) {
      const auto uj = static_cast<std::size_t>(j);
      const double s_prev = s[uj - 1];
      const double t = std::sqrt(1.0 - s_prev);
      const double a_x = aL(i, j) + a_s * 2.0 * L(i, j);
      az[uj] = a_x * t;
      a_s += a_x * z[uj] * (-0.5 / t) - 0.5 / (1.0 - s_prev);
    }
    az[0] = aL(i, 0) + a_s * 2.0 * L(i, 0);
    for (Eigen::Index j = 0; j < i; ++j) {
      const double zj = z[static_cast<std::size_t>(j)];
      ay[offset + j] = az[static_cast<std::size_t>(j)] * (1.0 - zj * zj) - 2.0 * zj;
    }
    offset += i;
  }
}

double evaluate(const Eigen::VectorXd& u, const DesignMatrix& design, const ModelSpec& spec,
                Eigen::VectorXd* grad) {
  check_dims(spec, design);
  const ParameterLayout lay = offsets(spec);
  if (static_cast<std::size_t>(u.size()) != lay.dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "parameter vector has " + std::to_string(u.size()) + " entries, expected " +
                    std::to_string(lay.dim));
  }
  if (grad) grad->setZero(u.size());
  if (!u.allFinite()) return kNegInf;

  double log_jac = 0.0;
  const ConstrainedParams p = transform(u, lay, &log_jac);
  const auto& pr = spec.prior;
  const auto K = static_cast<Eigen::Index>(lay.k);
  const auto Lc = static_cast<Eigen::Index>(lay.l);
  const auto D = static_cast<Eigen::Index>(lay.d);
  const auto N = static_cast<Eigen::Index>(lay.n);
  const bool slopes = spec.variant == Variant::RandomSlopes;

  // Priors.
  double lp = log_jac;
  lp += normal_lpdf(p.alpha, pr.alpha_mean, pr.alpha_sd);
  lp += normal_lpdf(p.nu, pr.nu_mean, pr.nu_sd);
  for (Eigen::Index c = 0; c < K; ++c) lp += normal_lpdf(p.beta[c], pr.beta_means[c], pr.beta_sds[c]);
  for (Eigen::Index c = 0; c < Lc; ++c) {
    lp += normal_lpdf(p.gamma[c], pr.gamma_means[c], pr.gamma_sds[c]);
  }
  lp += std::numbers::ln2 + student_t_lpdf(p.sigma_e, pr.sigma_e_df, pr.sigma_e_scale);
  for (Eigen::Index j = 0; j < D; ++j) {
    lp += std::numbers::ln2 + normal_lpdf(p.sd[j], 0.0, pr.group_sd_scale);
  }
  if (D > 1) {
    for (Eigen::Index i = 1; i < D; ++i) {
      lp += (static_cast<double>(D - i) - 3.0 + 2.0 * spec.lkj_eta) * std::log(p.L(i, i));
    }
  }
  for (Eigen::Index g = 0; g < N; ++g) {
    for (Eigen::Index j = 0; j < D; ++j) lp += -kHalfLog2Pi - 0.5 * p.Z(g, j) * p.Z(g, j);
  }

  // Likelihood, summed in canonical row order.
  const double w = spec.likelihood_weight;
  const double s = p.sigma_e;
  const Eigen::MatrixXd B = p.group_effects();
  double a_alpha = 0.0, a_nu = 0.0, a_ls = 0.0;
  Eigen::VectorXd a_beta = Eigen::VectorXd::Zero(K), a_gamma = Eigen::VectorXd::Zero(Lc);
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(N, D);
  if (w != 0.0) {
    double ll = 0.0;
    const double log_s = std::log(s);
    for (const auto r_ : design.order) {
      const auto r = static_cast<Eigen::Index>(r_);
      const auto g = design.group[r_];
      double mu = p.alpha + p.nu * design.lag[r];
      for (Eigen::Index c = 0; c < K; ++c) mu += p.beta[c] * design.exposure(r, c);
      for (Eigen::Index c = 0; c < Lc; ++c) mu += p.gamma[c] * design.covariates(r, c);
      if (D > 0) {
        mu += B(g, 0);
        if (slopes) {
          for (Eigen::Index c = 0; c < K; ++c) mu += B(g, c + 1) * design.exposure(r, c);
        }
      }
      const double e = design.response[r] - mu;
      const double zr = e / s;
      ll += -kHalfLog2Pi - log_s - 0.5 * zr * zr;
      if (grad) {
        const double gr = w * e / (s * s);
        a_alpha += gr;
        a_nu += gr * design.lag[r];
        for (Eigen::Index c = 0; c < K; ++c) a_beta[c] += gr * design.exposure(r, c);
        for (Eigen::Index c = 0; c < Lc; ++c) a_gamma[c] += gr * design.covariates(r, c);
        a_ls += w * (zr * zr - 1.0);
        if (D > 0) {
          G(g, 0) += gr;
          if (slopes) {
            for (Eigen::Index c = 0; c < K; ++c) G(g, c + 1) += gr * design.exposure(r, c);
          }
        }
      }
    }
    lp += w * ll;
  }
  if (!std::isfinite(lp)) {
    if (grad) grad->setZero();
    return kNegInf;
  }
  if (!grad) return lp;

  auto& gv = *grad;
  gv[static_cast<Eigen::Index>(lay.alpha)] = a_alpha - (p.alpha - pr.alpha_mean) / (pr.alpha_sd * pr.alpha_sd);
  gv[static_cast<Eigen::Index>(lay.nu)] = a_nu - (p.nu - pr.nu_mean) / (pr.nu_sd * pr.nu_sd);
  for (Eigen::Index c = 0; c < K; ++c) {
    gv[static_cast<Eigen::Index>(lay.beta) + c] =
        a_beta[c] - (p.beta[c] - pr.beta_means[c]) / (pr.beta_sds[c] * pr.beta_sds[c]);
  }
  for (Eigen::Index c = 0; c < Lc; ++c) {
    gv[static_cast<Eigen::Index>(lay.gamma) + c] =
        a_gamma[c] - (p.gamma[c] - pr.gamma_means[c]) / (pr.gamma_sds[c] * pr.gamma_sds[c]);
  }
  {
    // d/du of the half-t log density at sigma = exp(u), plus the Jacobian.
    const double df = pr.sigma_e_df;
    const double q = s * s / (df * pr.sigma_e_scale * pr.sigma_e_scale);
    gv[static_cast<Eigen::Index>(lay.sigma_e)] = a_ls - (df + 1.0) * q / (1.0 + q) + 1.0;
  }
  if (D > 0) {
    const Eigen::MatrixXd M = p.sd.asDiagonal() * p.L;
    const Eigen::MatrixXd dZ = G * M - p.Z;
    const Eigen::MatrixXd dM = G.transpose() * p.Z;
    for (Eigen::Index g = 0; g < N; ++g) {
      gv.segment(static_cast<Eigen::Index>(lay.z) + g * D, D) = dZ.row(g).transpose();
    }
    const double tau2 = pr.group_sd_scale * pr.group_sd_scale;
    for (Eigen::Index i = 0; i < D; ++i) {
      const double dsd = dM.row(i).dot(p.L.row(i));
      gv[static_cast<Eigen::Index>(lay.sd) + i] = dsd * p.sd[i] - p.sd[i] * p.sd[i] / tau2 + 1.0;
    }
    if (D > 1) {
      Eigen::MatrixXd aL = p.sd.asDiagonal() * dM;
      for (Eigen::Index i = 1; i < D; ++i) {
        aL(i, i) += (static_cast<double>(D - i) - 3.0 + 2.0 * spec.lkj_eta) / p.L(i, i);
      }
      aL = aL.triangularView<Eigen::Lower>();
      cholesky_corr_backprop(
          u.segment(static_cast<Eigen::Index>(lay.chol), static_cast<Eigen::Index>(lay.n_chol())),
          p.L, aL,
          gv.segment(static_cast<Eigen::Index>(lay.chol), static_cast<Eigen::Index>(lay.n_chol())));
    }
  }
  if (!gv.allFinite()) {
    gv.setZero();
    return kNegInf;
  }
  return lp;
}

}  // namespace

double log_posterior(const Eigen::VectorXd& u, const DesignMatrix& design,
                     const ModelSpec& spec) {
  return evaluate(u, design, spec, nullptr);
}

double log_posterior_grad(const Eigen::VectorXd& u, const DesignMatrix& design,
                          const ModelSpec& spec, Eigen::VectorXd& grad) {
  return evaluate(u, design, spec, &grad);
}

Eigen::VectorXd linear_predictor(const Eigen::VectorXd& row, const ParameterLayout& lay,
                                 const DesignMatrix& design) {
  const auto K = static_cast<Eigen::Index>(lay.k);
  const auto Lc = static_cast<Eigen::Index>(lay.l);
  const auto D = static_cast<Eigen::Index>(lay.d);
  const auto r_off = static_cast<Eigen::Index>(lay.constrained_dim - lay.n * lay.d);
  const double alpha = row[static_cast<Eigen::Index>(lay.alpha)];
  const double nu = row[static_cast<Eigen::Index>(lay.nu)];
  const auto beta = row.segment(static_cast<Eigen::Index>(lay.beta), K);
  const auto gamma = row.segment(static_cast<Eigen::Index>(lay.gamma), Lc);
  const auto n = static_cast<Eigen::Index>(design.rows());
  Eigen::VectorXd mu(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    double m = alpha + nu * design.lag[r];
    for (Eigen::Index c = 0; c < K; ++c) m += beta[c] * design.exposure(r, c);
    for (Eigen::Index c = 0; c < Lc; ++c) m += gamma[c] * design.covariates(r, c);
    if (D > 0) {
      const auto base = r_off + design.group[static_cast<std::size_t>(r)] * D;
      m += row[base];
      if (D > 1) {
        for (Eigen::Index c = 0; c < K; ++c) m += row[base + 1 + c] * design.exposure(r, c);
      }
    }
    mu[r] = m;
  }
  return mu;
}

Eigen::VectorXd pointwise_loglik(const Eigen::VectorXd& row, const ParameterLayout& lay,
                                 const DesignMatrix& design) {
  const Eigen::VectorXd mu = linear_predictor(row, lay, design);
  const double s = row[static_cast<Eigen::Index>(lay.sigma_e)];
  Eigen::VectorXd ll(mu.size());
  for (Eigen::Index r = 0; r < mu.size(); ++r) ll[r] = normal_lpdf(design.response[r], mu[r], s);
  return ll;
}

Eigen::MatrixXd read_corr_L(const Eigen::VectorXd& cpcs, std::size_t dim) {
  const auto K = static_cast<Eigen::Index>(dim);
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(K, K);
  if (K == 0) return L;
  L(0, 0) = 1.0;
  if (K == 1) return L;
  Eigen::ArrayXd acc = Eigen::ArrayXd::Ones(K - 1);
  Eigen::Index position = 0;
  Eigen::Index pull = K - 1;
  Eigen::ArrayXd temp = cpcs.head(pull).array();
  L.col(0).tail(pull) = temp.matrix();
  acc.tail(pull) = 1.0 - temp.square();
  for (Eigen::Index i = 1; i < K - 1; ++i) {
    position += pull;
    pull = K - 1 - i;
    temp = cpcs.segment(position, pull).array();
    L(i, i) = std::sqrt(acc(i - 1));
    L.col(i).tail(pull) = (temp * acc.tail(pull).sqrt()).matrix();
    acc.tail(pull) *= 1.0 - temp.square();
  }
  L(K - 1, K - 1) = std::sqrt(acc(K - 2));
  return L;
}

ConstrainedParams sample_prior(const ModelSpec& spec, const ParameterLayout& lay,
                               std::mt19937_64& rng) {
  const auto& pr = spec.prior;
  std::normal_distribution<double> std_normal(0.0, 1.0);
  ConstrainedParams p;
  p.alpha = pr.alpha_mean + pr.alpha_sd * std_normal(rng);
  p.nu = pr.nu_mean + pr.nu_sd * std_normal(rng);
  p.beta.resize(static_cast<Eigen::Index>(lay.k));
  for (Eigen::Index c = 0; c < p.beta.size(); ++c) {
    p.beta[c] = pr.beta_means[c] + pr.beta_sds[c] * std_normal(rng);
  }
  p.gamma.resize(static_cast<Eigen::Index>(lay.l));
  for (Eigen::Index c = 0; c < p.gamma.size(); ++c) {
    p.gamma[c] = pr.gamma_means[c] + pr.gamma_sds[c] * std_normal(rng);
  }
  std::student_t_distribution<double> t(pr.sigma_e_df);
  p.sigma_e = pr.sigma_e_scale * std::abs(t(rng));
  const auto D = static_cast<Eigen::Index>(lay.d);
  p.sd.resize(D);
  for (Eigen::Index j = 0; j < D; ++j) p.sd[j] = pr.group_sd_scale * std::abs(std_normal(rng));
  Eigen::VectorXd cpcs(static_cast<Eigen::Index>(lay.n_chol()));
  double a = spec.lkj_eta + 0.5 * static_cast<double>(D - 1);
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i + 1 < D; ++i) {
    a -= 0.5;
    std::gamma_distribution<double> ga(a, 1.0);
    for (Eigen::Index j = i + 1; j < D; ++j) {
      const double x = ga(rng);
      const double y = ga(rng);
      cpcs[count++] = 2.0 * x / (x + y) - 1.0;
    }
  }
  p.L = read_corr_L(cpcs, lay.d);
  p.Z.resize(static_cast<Eigen::Index>(lay.n), D);
  for (Eigen::Index g = 0; g < p.Z.rows(); ++g) {
    for (Eigen::Index j = 0; j < D; ++j) p.Z(g, j) = std_normal(rng);
  }
  return p;
}

}  // namespace thermopool
