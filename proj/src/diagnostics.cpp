#include "thermopool/diagnostics.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "thermopool/error.hpp"
#include "thermopool/rng.hpp"

namespace thermopool {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool all_identical(const Eigen::MatrixXd& x) {
  return x.size() == 0 || (x.array() == x(0, 0)).all();
}

void require_shape(const Eigen::MatrixXd& x) {
  if (x.cols() < 2 || x.rows() < 4) {
    throw Error(ErrorCode::DimensionMismatch, "need at least 2 chains of 4 draws");
  }
}

Eigen::MatrixXd split_chains(const Eigen::MatrixXd& x) {
  const auto n = x.rows();
  const auto half = n / 2;
  Eigen::MatrixXd out(half, 2 * x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    out.col(2 * c) = x.col(c).head(half);
    out.col(2 * c + 1) = x.col(c).tail(half);  // the middle draw is dropped for odd n
  }
  return out;
}

// Normal scores of pooled ranks (average ranks for ties).
Eigen::MatrixXd z_scale(const Eigen::MatrixXd& x) {
  const auto S = static_cast<std::size_t>(x.size());
  std::vector<std::size_t> idx(S);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const double* v = x.data();
  std::stable_sort(idx.begin(), idx.end(), [v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  Eigen::MatrixXd z(x.rows(), x.cols());
  double* out = z.data();
  const boost::math::normal_distribution<double> std_normal;
  const double denom = static_cast<double>(S) + 0.25;
  for (std::size_t i = 0; i < S;) {
    std::size_t j = i;
    while (j + 1 < S && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    const double score = boost::math::quantile(std_normal, (rank - 0.375) / denom);
    for (std::size_t t = i; t <= j; ++t) out[idx[t]] = score;
    i = j + 1;
  }
  return z;
}

double sample_var(const Eigen::VectorXd& v) {
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

// Per-chain quantities are combined in sorted order so that relabelling
// chains cannot change a result, not even in the last bit.
Eigen::VectorXd sorted(Eigen::VectorXd v) {
  std::sort(v.data(), v.data() + v.size());
  return v;
}

double rhat_basic(const Eigen::MatrixXd& x) {
  const auto n = static_cast<double>(x.rows());
  Eigen::VectorXd means(x.cols()), vars(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    means[c] = x.col(c).mean();
    vars[c] = sample_var(x.col(c));
  }
  const double between = n * sample_var(sorted(means));
  const double within = sorted(vars).mean();
  if (within == 0.0) return kInf;
  return std::sqrt((between / within + n - 1.0) / n);
}

double median_of(const Eigen::MatrixXd& x) {
  std::vector<double> v(x.data(), x.data() + x.size());
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, 0.5);
}

// Biased autocovariance at one lag.
double autocov(const Eigen::VectorXd& x, double mean, Eigen::Index lag) {
  double s = 0.0;
  for (Eigen::Index i = 0; i + lag < x.size(); ++i) s += (x[i] - mean) * (x[i + lag] - mean);
  return s / static_cast<double>(x.size());
}

double ess_of_split(const Eigen::MatrixXd& x) {
  const auto chains = x.cols();
  const auto n = x.rows();
  const double nd = static_cast<double>(n);
  Eigen::VectorXd means(chains);
  for (Eigen::Index c = 0; c < chains; ++c) means[c] = x.col(c).mean();
  auto mean_acov = [&](Eigen::Index lag) {
    Eigen::VectorXd per_chain(chains);
    for (Eigen::Index c = 0; c < chains; ++c) per_chain[c] = autocov(x.col(c), means[c], lag);
    return sorted(per_chain).mean();
  };
  const double mean_var = mean_acov(0) * nd / (nd - 1.0);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (chains > 1) var_plus += sample_var(sorted(means));

  std::vector<double> rho(static_cast<std::size_t>(n), 0.0);
  Eigen::Index t = 0;
  double rho_even = 1.0;
  rho[0] = rho_even;
  double rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
  rho[1] = rho_odd;
  while (t < n - 5 && !std::isnan(rho_even + rho_odd) && rho_even + rho_odd > 0) {
    t += 2;
    rho_even = 1.0 - (mean_var - mean_acov(t)) / var_plus;
    rho_odd = 1.0 - (mean_var - mean_acov(t + 1)) / var_plus;
    if (rho_even + rho_odd >= 0) {
      rho[static_cast<std::size_t>(t)] = rho_even;
      rho[static_cast<std::size_t>(t + 1)] = rho_odd;
    }
  }
  const Eigen::Index max_t = t;
  if (rho_even > 0) rho[static_cast<std::size_t>(max_t)] = rho_even;

  t = 0;
  while (t <= max_t - 4) {
    t += 2;
    const auto u = static_cast<std::size_t>(t);
    if (rho[u] + rho[u + 1] > rho[u - 2] + rho[u - 1]) {
      rho[u] = 0.5 * (rho[u - 2] + rho[u - 1]);
      rho[u + 1] = rho[u];
    }
  }
  const double total = static_cast<double>(chains) * nd;
  double tau = -1.0 + rho[static_cast<std::size_t>(max_t)];
  for (Eigen::Index i = 0; i < max_t; ++i) tau += 2.0 * rho[static_cast<std::size_t>(i)];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

double se_of_sum(const Eigen::VectorXd& pointwise) {
  const auto n = pointwise.size();
  if (n < 2) return 0.0;
  return std::sqrt(static_cast<double>(n) * sample_var(pointwise));
}

}  // namespace

double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw Error(ErrorCode::EmptyDraws, "quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double split_rhat(const Eigen::MatrixXd& draws) {
  require_shape(draws);
  if (all_identical(draws)) throw Error(ErrorCode::ZeroVariance, "draws are constant");
  const double bulk = rhat_basic(z_scale(split_chains(draws)));
  const double m = median_of(draws);
  const Eigen::MatrixXd folded = (draws.array() - m).abs().matrix();
  const double tail = all_identical(folded) ? bulk : rhat_basic(z_scale(split_chains(folded)));
  // Ranks saturate once chains stop overlapping (two disjoint chains cap
  // near 1.83), so the unnormalized split statistic is folded in as well.
  const double raw = rhat_basic(split_chains(draws));
  return std::max({bulk, tail, raw});
}

double ess_bulk(const Eigen::MatrixXd& draws) {
  require_shape(draws);
  if (all_identical(draws)) throw Error(ErrorCode::ZeroVariance, "draws are constant");
  return ess_of_split(z_scale(split_chains(draws)));
}

double ess_basic(const Eigen::MatrixXd& draws) {
  require_shape(draws);
  if (all_identical(draws)) throw Error(ErrorCode::ZeroVariance, "draws are constant");
  return ess_of_split(split_chains(draws));
}

std::vector<ParameterDiagnostics> diagnose_all(const PosteriorDraws& draws) {
  std::vector<ParameterDiagnostics> out;
  for (std::size_t p = 0; p < draws.n_params(); ++p) {
    const Eigen::MatrixXd m = draws.chain_matrix(p);
    ParameterDiagnostics d{draws.labels[p], std::numeric_limits<double>::quiet_NaN(),
                           std::numeric_limits<double>::quiet_NaN()};
    if (!all_identical(m)) {
      d.rhat = split_rhat(m);
      d.ess_bulk = ess_bulk(m);
    }
    out.push_back(std::move(d));
  }
  return out;
}

ParetoFit gpd_fit(const std::vector<double>& x) {
  const auto N = x.size();
  const double prior = 3.0;
  const std::size_t M = 30 + static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(N))));
  const double xstar = x[static_cast<std::size_t>(std::floor(static_cast<double>(N) / 4.0 + 0.5)) - 1];
  std::vector<double> theta(M), l_theta(M);
  for (std::size_t j = 0; j < M; ++j) {
    theta[j] = 1.0 / x[N - 1] +
               (1.0 - std::sqrt(static_cast<double>(M) / (static_cast<double>(j + 1) - 0.5))) /
                   prior / xstar;
    const double a = -theta[j];
    double k = 0.0;
    for (const double xi : x) k += std::log1p(a * xi);
    k /= static_cast<double>(N);
    l_theta[j] = static_cast<double>(N) * (std::log(a / k) - k - 1.0);
  }
  const double mx = *std::max_element(l_theta.begin(), l_theta.end());
  double denom = 0.0;
  for (const double l : l_theta) denom += std::exp(l - mx);
  double theta_hat = 0.0;
  for (std::size_t j = 0; j < M; ++j) theta_hat += theta[j] * std::exp(l_theta[j] - mx) / denom;
  double k = 0.0;
  for (const double xi : x) k += std::log1p(-theta_hat * xi);
  k /= static_cast<double>(N);
  ParetoFit fit;
  fit.sigma = -k / theta_hat;
  const double n = static_cast<double>(N);
  fit.k = k * n / (n + 10.0) + 10.0 * 0.5 / (n + 10.0);
  if (std::isnan(fit.k)) fit.k = kInf;
  return fit;
}

SmoothedWeights psis_smooth(const std::vector<double>& log_ratios) {
  const auto S = log_ratios.size();
  const double max_lr = *std::max_element(log_ratios.begin(), log_ratios.end());
  std::vector<double> lw(S);
  for (std::size_t s = 0; s < S; ++s) lw[s] = log_ratios[s] - max_lr;
  SmoothedWeights out;
  out.pareto_k = kInf;
  const auto tail_len = static_cast<std::size_t>(std::ceil(0.2 * static_cast<double>(S)));
  if (tail_len >= 5 && tail_len < S) {
    std::vector<std::size_t> ord(S);
    std::iota(ord.begin(), ord.end(), std::size_t{0});
    std::stable_sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return lw[a] < lw[b]; });
    const std::size_t first = S - tail_len;
    const double tail_min = lw[ord[first]];
    const double tail_max = lw[ord[S - 1]];
    if (std::abs(tail_max - tail_min) >= std::numeric_limits<double>::epsilon() / 100.0) {
      const double cutoff = lw[ord[first - 1]];
      const double exp_cutoff = std::exp(cutoff);
      std::vector<double> exceed(tail_len);
      for (std::size_t i = 0; i < tail_len; ++i) exceed[i] = std::exp(lw[ord[first + i]]) - exp_cutoff;
      const ParetoFit fit = gpd_fit(exceed);
      if (std::isfinite(fit.k) && fit.sigma > 0.0) {
        for (std::size_t i = 0; i < tail_len; ++i) {
          const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(tail_len);
          const double q = fit.sigma * std::expm1(-fit.k * std::log1p(-p)) / fit.k + exp_cutoff;
          lw[ord[first + i]] = std::log(q);
        }
      }
      out.pareto_k = fit.k;
    }
  }
  for (auto& v : lw) v = std::min(v, 0.0) + max_lr;
  out.log_weights = std::move(lw);
  return out;
}

std::size_t LooResult::n_high_k(double threshold) const {
  return static_cast<std::size_t>((pareto_k.array() > threshold).count());
}

LooResult psis_loo(const Eigen::MatrixXd& loglik) {
  const auto S = loglik.rows();
  const auto n = loglik.cols();
  if (S == 0 || n == 0) throw Error(ErrorCode::EmptyDraws, "no log-likelihood draws");
  LooResult r;
  r.pointwise.resize(n);
  r.pareto_k.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd ll = loglik.col(i);
    if (!ll.allFinite()) {
      throw Error(ErrorCode::AllRatiosDegenerate,
                  "observation " + std::to_string(i) + " has non-finite log likelihood");
    }
    std::vector<double> ratios(static_cast<std::size_t>(S));
    for (Eigen::Index s = 0; s < S; ++s) ratios[static_cast<std::size_t>(s)] = -ll[s];
    const auto sw = psis_smooth(ratios);
    const Eigen::VectorXd lw = Eigen::Map<const Eigen::VectorXd>(sw.log_weights.data(), S);
    r.pointwise[i] = log_sum_exp(lw + ll) - log_sum_exp(lw);
    // With too few draws for a tail fit the shape is reported as 0.
    r.pareto_k[i] = std::isfinite(sw.pareto_k) ? sw.pareto_k : 0.0;
  }
  r.elpd = r.pointwise.sum();
  r.se = se_of_sum(r.pointwise);
  return r;
}

Eigen::MatrixXd loglik_matrix(const PosteriorDraws& draws, const DesignMatrix& design,
                              const ModelSpec& spec) {
  const ParameterLayout layout = make_layout(spec, design);
  if (layout.labels != draws.labels) {
    throw Error(ErrorCode::DimensionMismatch, "draws do not belong to this model and design");
  }
  Eigen::MatrixXd ll(static_cast<Eigen::Index>(draws.total_draws()),
                     static_cast<Eigen::Index>(design.rows()));
  Eigen::Index s = 0;
  for (std::size_t c = 0; c < draws.chains; ++c) {
    for (std::size_t i = 0; i < draws.iterations; ++i) {
      ll.row(s++) = pointwise_loglik(draws.row(c, i), layout, design).transpose();
    }
  }
  return ll;
}

LooResult psis_loo(const PosteriorDraws& draws, const DesignMatrix& design,
                   const ModelSpec& spec) {
  return psis_loo(loglik_matrix(draws, design, spec));
}

ElpdDifference elpd_difference(const LooResult& a, const LooResult& b) {
  if (a.pointwise.size() != b.pointwise.size()) {
    throw Error(ErrorCode::MismatchedObservations, "results cover different observations");
  }
  const Eigen::VectorXd d = a.pointwise - b.pointwise;
  return {d.sum(), se_of_sum(d)};
}

std::vector<ComparisonRow> compare_models(const std::vector<NamedLoo>& results) {
  if (results.empty()) return {};
  for (const auto& r : results) {
    if (r.loo.pointwise.size() != results.front().loo.pointwise.size()) {
      throw Error(ErrorCode::MismatchedObservations,
                  r.name + " has " + std::to_string(r.loo.pointwise.size()) + " observations");
    }
  }
  std::vector<std::size_t> order(results.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (results[a].loo.elpd != results[b].loo.elpd) return results[a].loo.elpd > results[b].loo.elpd;
    return results[a].name < results[b].name;
  });
  const auto& best = results[order.front()].loo;
  std::vector<ComparisonRow> rows;
  for (const auto i : order) {
    ComparisonRow row;
    row.name = results[i].name;
    row.elpd = results[i].loo.elpd;
    row.se = results[i].loo.se;
    if (i != order.front()) {
      const auto d = elpd_difference(results[i].loo, best);
      row.elpd_diff = d.diff;
      row.se_diff = d.se;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

PredictiveSummary predictive_simulate(const PosteriorDraws* draws, const DesignMatrix& design,
                                      const ModelSpec& spec, PredictiveMode mode,
                                      std::size_t n_reps, std::uint64_t seed) {
  if (n_reps == 0) throw Error(ErrorCode::InvalidConfig, "n_reps must be at least 1");
  const ParameterLayout layout = make_layout(spec, design);
  if (mode == PredictiveMode::Posterior) {
    if (!draws || draws->total_draws() == 0) {
      throw Error(ErrorCode::EmptyDraws, "posterior predictive checks need draws");
    }
    if (draws->labels != layout.labels) {
      throw Error(ErrorCode::DimensionMismatch, "draws do not belong to this model and design");
    }
  }
  const auto n = static_cast<Eigen::Index>(design.rows());
  PredictiveSummary out;
  out.replicates.resize(static_cast<Eigen::Index>(n_reps), n);
  for (std::size_t r = 0; r < n_reps; ++r) {
    CounterRng rng(seed, 0, r);
    Eigen::VectorXd row;
    if (mode == PredictiveMode::Posterior) {
      const std::size_t total = draws->total_draws();
      const std::size_t s = (r * total) / n_reps;
      row = draws->row(s / draws->iterations, s % draws->iterations);
    } else {
      std::mt19937_64 prior_rng(rng());
      row = constrained_row(sample_prior(spec, layout, prior_rng), layout);
    }
    const Eigen::VectorXd mu = linear_predictor(row, layout, design);
    const double sigma = row[static_cast<Eigen::Index>(layout.sigma_e)];
    std::normal_distribution<double> noise(0.0, 1.0);
    for (Eigen::Index i = 0; i < n; ++i) {
      out.replicates(static_cast<Eigen::Index>(r), i) = mu[i] + sigma * noise(rng);
    }
  }
  out.lower.resize(n);
  out.median.resize(n);
  out.upper.resize(n);
  std::size_t inside = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> col(out.replicates.col(i).data(),
                            out.replicates.col(i).data() + out.replicates.rows());
    std::sort(col.begin(), col.end());
    out.lower[i] = quantile_sorted(col, 0.025);
    out.median[i] = quantile_sorted(col, 0.5);
    out.upper[i] = quantile_sorted(col, 0.975);
    const double y = design.response[i];
    if (y >= out.lower[i] && y <= out.upper[i]) ++inside;
  }
  out.coverage = n ? static_cast<double>(inside) / static_cast<double>(n) : 0.0;

  std::vector<double> obs(design.response.data(), design.response.data() + n);
  std::vector<double> rep(out.replicates.data(), out.replicates.data() + out.replicates.size());
  std::sort(obs.begin(), obs.end());
  std::sort(rep.begin(), rep.end());
  double ks = 0.0;
  std::size_t i = 0, j = 0;
  while (i < obs.size() && j < rep.size()) {
    const double x = std::min(obs[i], rep[j]);
    while (i < obs.size() && obs[i] <= x) ++i;
    while (j < rep.size() && rep[j] <= x) ++j;
    ks = std::max(ks, std::abs(static_cast<double>(i) / static_cast<double>(obs.size()) -
                               static_cast<double>(j) / static_cast<double>(rep.size())));
  }
  out.ks_statistic = ks;
  out.observed_min = obs.empty() ? 0.0 : obs.front();
  out.observed_max = obs.empty() ? 0.0 : obs.back();
  out.replicated_min = rep.front();
  out.replicated_max = rep.back();
  return out;
}

}  // namespace thermopool
