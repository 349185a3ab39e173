#include <doctest.h>

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numeric>
#include <random>

#include "support.hpp"
#include "thermopool/diagnostics.hpp"
#include "thermopool/error.hpp"
#include "thermopool/sampler.hpp"
#include "thermopool/simulate.hpp"

using namespace thermopool;
using namespace thermopool::testing;

namespace {

Eigen::MatrixXd gaussian_chains(Eigen::Index n, Eigen::Index chains, std::mt19937_64& rng,
                                const std::vector<double>& means = {}) {
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd m(n, chains);
  for (Eigen::Index c = 0; c < chains; ++c) {
    const double mu = means.empty() ? 0.0 : means[static_cast<std::size_t>(c)];
    for (Eigen::Index i = 0; i < n; ++i) m(i, c) = mu + z(rng);
  }
  return m;
}

// Rank-normalized split R-hat written out directly: split, pool ranks with
// ties averaged, map through the normal quantile, classical R-hat on the
// result; same again on |x - median|; classical R-hat on the raw split
// chains; take the largest.
double oracle_rhat(const Eigen::MatrixXd& x) {
  const Eigen::Index half = x.rows() / 2;
  Eigen::MatrixXd s(half, 2 * x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    s.col(2 * c) = x.col(c).head(half);
    s.col(2 * c + 1) = x.col(c).segment(x.rows() - half, half);
  }
  auto zscores = [](const Eigen::MatrixXd& m) {
    std::vector<std::pair<double, Eigen::Index>> v;
    for (Eigen::Index i = 0; i < m.size(); ++i) v.emplace_back(m.data()[i], i);
    std::sort(v.begin(), v.end());
    const double S = static_cast<double>(v.size());
    Eigen::MatrixXd z(m.rows(), m.cols());
    const boost::math::normal nd;
    for (std::size_t i = 0; i < v.size();) {
      std::size_t j = i;
      while (j < v.size() && v[j].first == v[i].first) ++j;
      const double rank = 0.5 * static_cast<double>(i + 1 + j);
      for (std::size_t k = i; k < j; ++k) {
        z.data()[v[k].second] = boost::math::quantile(nd, (rank - 0.375) / (S + 0.25));
      }
      i = j;
    }
    return z;
  };
  auto classical = [](const Eigen::MatrixXd& m) {
    const double n = static_cast<double>(m.rows());
    const Eigen::VectorXd means = m.colwise().mean();
    double w = 0.0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) w += (m.col(c).array() - means[c]).square().sum() / (n - 1);
    w /= static_cast<double>(m.cols());
    const double b = n * (means.array() - means.mean()).square().sum() / static_cast<double>(m.cols() - 1);
    return std::sqrt(((n - 1) / n * w + b / n) / w);
  };
  std::vector<double> all(s.data(), s.data() + s.size());
  std::sort(all.begin(), all.end());
  const double med = quantile_sorted(all, 0.5);
  const Eigen::MatrixXd folded = (s.array() - med).abs().matrix();
  return std::max({classical(zscores(s)), classical(zscores(folded)), classical(s)});
}

LooResult loo_of(const std::vector<double>& pointwise) {
  LooResult r;
  r.pointwise = Eigen::Map<const Eigen::VectorXd>(pointwise.data(), static_cast<Eigen::Index>(pointwise.size()));
  r.pareto_k = Eigen::VectorXd::Zero(r.pointwise.size());
  r.elpd = std::accumulate(pointwise.begin(), pointwise.end(), 0.0);
  return r;
}

std::vector<double> random_pointwise(std::size_t n, double shift, std::mt19937_64& rng) {
  std::normal_distribution<double> z(-1.0 + shift, 0.5);
  std::vector<double> v(n);
  for (auto& x : v) x = z(rng);
  return v;
}

}  // namespace

TEST_CASE("type-7 quantiles") {
  const std::vector<double> v{1.0, 2.0, 4.0, 8.0};
  CHECK(quantile_sorted(v, 0.0) == 1.0);
  CHECK(quantile_sorted(v, 1.0) == 8.0);
  CHECK(quantile_sorted(v, 0.5) == 3.0);
  CHECK(quantile_sorted(v, 0.25) == doctest::Approx(1.75).epsilon(1e-15));
  CHECK(quantile_sorted({5.0}, 0.3) == 5.0);
}

TEST_CASE("split R-hat") {
  std::mt19937_64 rng(1);
  SUBCASE("four chains from one Gaussian") {
    const double r = split_rhat(gaussian_chains(1000, 4, rng));
    CHECK(r >= 0.99);
    CHECK(r <= 1.01);
  }
  SUBCASE("separated chains against the direct formula") {
    const Eigen::MatrixXd x = gaussian_chains(1000, 2, rng, {0.0, 10.0});
    const double r = split_rhat(x);
    CHECK(r > 3.0);
    CHECK(r == doctest::Approx(oracle_rhat(x)).epsilon(1e-10));
  }
  SUBCASE("agreement with the direct formula on mixed chains") {
    for (int rep = 0; rep < 10; ++rep) {
      const Eigen::MatrixXd x = gaussian_chains(101 + rep, 3, rng, {0.0, 0.1 * rep, 0.3});
      CHECK(split_rhat(x) == doctest::Approx(oracle_rhat(x)).epsilon(1e-10));
    }
  }
  SUBCASE("constant draws") {
    try {
      split_rhat(Eigen::MatrixXd::Constant(100, 4, 2.5));
      FAIL("expected ZeroVariance");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ZeroVariance);
    }
    CHECK_THROWS_AS(ess_bulk(Eigen::MatrixXd::Constant(100, 4, 2.5)), Error);
  }
  SUBCASE("affine invariance") {
    const Eigen::MatrixXd x = gaussian_chains(500, 4, rng, {0.0, 0.2, -0.1, 0.0});
    const Eigen::MatrixXd y = (3.5 * x.array() - 7.0).matrix();
    CHECK(split_rhat(y) == split_rhat(x));
    CHECK(ess_bulk(y) == ess_bulk(x));
  }
}

TEST_CASE("effective sample size") {
  std::mt19937_64 rng(2);
  SUBCASE("independent draws") {
    const double e = ess_bulk(gaussian_chains(1000, 4, rng));
    CHECK(e >= 3000.0);
    CHECK(e <= 5000.0);
  }
  SUBCASE("AR(1) with rho 0.9") {
    const double rho = 0.9;
    const Eigen::Index n = 10000, chains = 4;
    std::normal_distribution<double> z(0.0, std::sqrt(1 - rho * rho));
    Eigen::MatrixXd x(n, chains);
    for (Eigen::Index c = 0; c < chains; ++c) {
      double v = z(rng) / std::sqrt(1 - rho * rho);
      for (Eigen::Index i = 0; i < n; ++i) x(i, c) = v = rho * v + z(rng);
    }
    const double expected = static_cast<double>(n * chains) * (1 - rho) / (1 + rho);
    const double e = ess_bulk(x);
    MESSAGE("AR(1) ESS " << e << " vs " << expected);
    CHECK(std::abs(e - expected) < 0.3 * expected);
    CHECK(std::abs(ess_basic(x) - expected) < 0.3 * expected);
  }
}

TEST_CASE("generalized Pareto fit") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const double k : {0.1, 0.4, 0.8}) {
    std::vector<double> x(4000);
    for (auto& v : x) v = 2.0 * (std::pow(1.0 - u(rng), -k) - 1.0) / k;
    std::sort(x.begin(), x.end());
    const ParetoFit f = gpd_fit(x);
    CHECK(f.k == doctest::Approx(k).epsilon(0.1 / k));
    CHECK(f.sigma == doctest::Approx(2.0).epsilon(0.15));
  }
}

TEST_CASE("PSIS-LOO on a conjugate normal mean") {
  // y_i ~ N(theta, 1) with a flat prior: theta | y ~ N(mean(y), 1/n) and the
  // leave-one-out predictive of y_i is N(mean(y_-i), 1 + 1/(n-1)).
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(0.0, 1.0);
  const int n = 60, S = 8000;
  std::vector<double> y(n);
  for (auto& v : y) v = 1.5 + z(rng);
  const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / n;
  Eigen::MatrixXd ll(S, n);
  for (int s = 0; s < S; ++s) {
    const double theta = ybar + z(rng) / std::sqrt(n);
    for (int i = 0; i < n; ++i) ll(s, i) = -0.5 * std::log(2 * M_PI) - 0.5 * (y[i] - theta) * (y[i] - theta);
  }
  double exact = 0.0;
  for (int i = 0; i < n; ++i) {
    const double m = (ybar * n - y[i]) / (n - 1);
    const double var = 1.0 + 1.0 / (n - 1);
    exact += -0.5 * std::log(2 * M_PI * var) - 0.5 * (y[i] - m) * (y[i] - m) / var;
  }
  const LooResult r = psis_loo(ll);
  CHECK(r.pointwise.size() == n);
  CHECK(r.elpd == r.pointwise.sum());
  CHECK(r.n_high_k() == 0);
  CHECK(r.elpd == doctest::Approx(exact).epsilon(0.005));
  CHECK(r.se > 0.0);
}

TEST_CASE("PSIS-LOO edge cases") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd one(500, 1);
  for (Eigen::Index s = 0; s < 500; ++s) one(s, 0) = -1.0 + 0.1 * z(rng);
  const LooResult r = psis_loo(one);
  REQUIRE(r.pointwise.size() == 1);
  CHECK(r.elpd == r.pointwise[0]);
  CHECK(std::isfinite(r.pareto_k[0]));

  one(7, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    psis_loo(one);
    FAIL("expected AllRatiosDegenerate");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AllRatiosDegenerate);
  }
}

TEST_CASE("model comparison") {
  std::mt19937_64 rng(6);
  const LooResult a = loo_of(random_pointwise(50, 0.0, rng));
  const LooResult b = loo_of(random_pointwise(50, 0.5, rng));
  const LooResult c = loo_of(random_pointwise(50, -0.5, rng));

  const ElpdDifference same = elpd_difference(a, a);
  CHECK(same.diff == 0.0);
  CHECK(same.se == 0.0);

  const ElpdDifference ab = elpd_difference(a, b), ba = elpd_difference(b, a);
  CHECK(ab.diff == -ba.diff);
  CHECK(ab.se == ba.se);
  CHECK(ab.diff == doctest::Approx(a.elpd - b.elpd));
  const Eigen::VectorXd d = a.pointwise - b.pointwise;
  const double oracle_se = std::sqrt(50.0 * (d.array() - d.mean()).square().sum() / 49.0);
  CHECK(ab.se == doctest::Approx(oracle_se).epsilon(1e-12));

  const auto single = compare_models({{"only", a}});
  REQUIRE(single.size() == 1);
  CHECK(single[0].elpd_diff == 0.0);
  CHECK(single[0].se_diff == 0.0);

  const auto t1 = compare_models({{"a", a}, {"b", b}, {"c", c}});
  const auto t2 = compare_models({{"c", c}, {"a", a}, {"b", b}});
  REQUIRE(t1.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(t1[i].name == t2[i].name);
    CHECK(t1[i].elpd == t2[i].elpd);
    CHECK(t1[i].elpd_diff == t2[i].elpd_diff);
    CHECK(t1[i].se_diff == t2[i].se_diff);
  }
  CHECK(t1[0].elpd_diff == 0.0);
  for (std::size_t i = 1; i < 3; ++i) CHECK(t1[i].elpd_diff <= t1[i - 1].elpd_diff);
  CHECK(t1[0].name == "b");

  try {
    compare_models({{"a", a}, {"short", loo_of(random_pointwise(49, 0.0, rng))}});
    FAIL("expected MismatchedObservations");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MismatchedObservations);
  }
}

TEST_CASE("fitted-model diagnostics") {
  DgpConfig cfg;
  cfg.seed = 8;
  cfg.countries = 6;
  cfg.years = 10;
  cfg.width = 5.0;
  cfg.variant = Variant::RandomIntercepts;
  const SimulatedDesign sim = simulate_design(cfg);
  const ModelSpec spec = make_model_spec(Variant::RandomIntercepts, sim.design);
  SamplerConfig sc;
  sc.n_warmup = 400;
  sc.n_samples = 400;
  sc.seed = 2;
  const PosteriorDraws draws = run_chains(sim.design, spec, sc);

  SUBCASE("diagnose_all and chain exchangeability") {
    const auto diag = diagnose_all(draws);
    REQUIRE(diag.size() == draws.n_params());
    const auto perm = diagnose_all(draws.permute_chains({2, 0, 3, 1}));
    for (std::size_t p = 0; p < diag.size(); ++p) {
      CHECK(diag[p].label == perm[p].label);
      CHECK(diag[p].rhat == doctest::Approx(perm[p].rhat).epsilon(1e-12));
      CHECK(diag[p].ess_bulk == doctest::Approx(perm[p].ess_bulk).epsilon(1e-12));
    }
    const auto l1 = psis_loo(draws, sim.design, spec);
    const auto l2 = psis_loo(draws.permute_chains({2, 0, 3, 1}), sim.design, spec);
    CHECK(l1.elpd == doctest::Approx(l2.elpd).epsilon(1e-12));
  }
  SUBCASE("loo from draws equals loo from the matrix") {
    const Eigen::MatrixXd ll = loglik_matrix(draws, sim.design, spec);
    CHECK(static_cast<std::size_t>(ll.rows()) == draws.total_draws());
    CHECK(static_cast<std::size_t>(ll.cols()) == sim.design.rows());
    const auto a = psis_loo(ll);
    const auto b = psis_loo(draws, sim.design, spec);
    CHECK(a.elpd == b.elpd);
    CHECK(a.pointwise == b.pointwise);
  }
  SUBCASE("posterior predictive calibration") {
    const auto s = predictive_simulate(&draws, sim.design, spec, PredictiveMode::Posterior, 400, 5);
    CHECK(s.replicates.rows() == 400);
    CHECK(static_cast<std::size_t>(s.replicates.cols()) == sim.design.rows());
    CHECK(s.coverage >= 0.9);
    CHECK((s.lower.array() <= s.median.array()).all());
    CHECK((s.median.array() <= s.upper.array()).all());
    const auto again = predictive_simulate(&draws, sim.design, spec, PredictiveMode::Posterior, 400, 5);
    CHECK(again.replicates == s.replicates);
  }
  SUBCASE("prior predictive covers the observed range") {
    const auto s = predictive_simulate(nullptr, sim.design, spec, PredictiveMode::Prior, 200, 6);
    CHECK(s.replicated_min <= s.observed_min);
    CHECK(s.replicated_max >= s.observed_max);
    CHECK(s.observed_min == sim.design.response.minCoeff());
  }
  SUBCASE("single replicate") {
    const auto s = predictive_simulate(&draws, sim.design, spec, PredictiveMode::Posterior, 1, 7);
    CHECK(s.replicates.rows() == 1);
    CHECK(s.lower == s.upper);
  }
}

TEST_CASE("constant parameter columns") {
  PosteriorDraws d;
  d.labels = {"a", "b"};
  d.chains = 2;
  d.iterations = 50;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z(0.0, 1.0);
  for (std::size_t i = 0; i < 100; ++i) {
    d.values.push_back(z(rng));
    d.values.push_back(1.0);
  }
  const auto diag = diagnose_all(d);
  CHECK(std::isfinite(diag[0].rhat));
  CHECK(std::isnan(diag[1].rhat));
}
