#include <doctest.h>

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <random>

#include "support.hpp"
#include "thermopool/error.hpp"
#include "thermopool/inference.hpp"
#include "thermopool/rng.hpp"
#include "thermopool/sampler.hpp"
#include "thermopool/simulate.hpp"

using namespace thermopool;
using namespace thermopool::testing;

namespace {

LogDensity std_gaussian() {
  return [](const Eigen::VectorXd& q, Eigen::VectorXd& g) {
    g = -q;
    return -0.5 * q.squaredNorm();
  };
}

SamplerConfig single_chain(std::size_t warmup, std::size_t samples, std::uint64_t seed) {
  SamplerConfig c;
  c.n_chains = 1;
  c.n_warmup = warmup;
  c.n_samples = samples;
  c.seed = seed;
  c.n_threads = 1;
  return c;
}

// Neal's funnel: v ~ N(0, 3), x_i ~ N(0, exp(v / 2)), i = 1..9.
LogDensity funnel_centered() {
  return [](const Eigen::VectorXd& q, Eigen::VectorXd& g) {
    const double v = q[0];
    const auto x = q.tail(q.size() - 1);
    const double n = static_cast<double>(x.size());
    const double ev = std::exp(-v);
    g.resize(q.size());
    g[0] = -v / 9.0 - 0.5 * n + 0.5 * x.squaredNorm() * ev;
    g.tail(q.size() - 1) = -x * ev;
    return -v * v / 18.0 - 0.5 * n * v - 0.5 * x.squaredNorm() * ev;
  };
}

// Same distribution written in standardized coordinates.
LogDensity funnel_noncentered() {
  return [](const Eigen::VectorXd& q, Eigen::VectorXd& g) {
    g.resize(q.size());
    g[0] = -q[0];
    g.tail(q.size() - 1) = -q.tail(q.size() - 1);
    return -0.5 * q.squaredNorm();
  };
}

std::size_t count_divergent(const ChainOutput& out) {
  return static_cast<std::size_t>(
      std::count_if(out.stats.begin(), out.stats.end(), [](const auto& s) { return s.divergent; }));
}

DgpConfig small_pooled_dgp() {
  DgpConfig c;
  c.seed = 31;
  c.countries = 8;
  c.years = 12;
  c.variant = Variant::Pooled;
  c.width = 5.0;
  return c;
}

}  // namespace

TEST_CASE("counter rng") {
  CounterRng a(1, 2, 3), b(1, 2, 3), c(1, 2, 4), d(1, 3, 3);
  const auto x = a();
  CHECK(x == b());
  CHECK(x != c());
  CHECK(x != d());
  CounterRng u(7, 0, 0);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double v = u.uniform();
    CHECK_FALSE((v < 0.0 || v >= 1.0));
    sum += v;
  }
  CHECK(sum / 100000 == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("config validation") {
  SamplerConfig c;
  CHECK_NOTHROW(c.validate());
  c.n_chains = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = SamplerConfig{};
  c.target_accept = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = SamplerConfig{};
  c.n_chains = 1;
  c.n_warmup = 100;
  c.n_samples = 10;
  try {
    run_chain(std_gaussian(), 2, c, 0);
    FAIL("expected InvalidConfig");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidConfig);
  }
  // Inherited tuning lifts the minimum.
  Tuning warm;
  warm.inv_mass = Eigen::VectorXd::Ones(2);
  warm.step_size = 0.5;
  CHECK_NOTHROW(run_chain(std_gaussian(), 2, c, 0, &warm));
}

TEST_CASE("2-D standard Gaussian") {
  const ChainOutput out = run_chain(std_gaussian(), 2, single_chain(1000, 5000, 11), 0);
  REQUIRE(out.draws.size() == 5000);
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& q : out.draws) mean += q;
  mean /= 5000.0;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& q : out.draws) cov += (q - mean) * (q - mean).transpose();
  cov /= 4999.0;
  CHECK(mean.cwiseAbs().maxCoeff() < 0.05);
  CHECK((cov - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 0.1);
  CHECK(count_divergent(out) == 0);
}

TEST_CASE("vanishing step size") {
  const LogDensity logp = std_gaussian();
  NutsState s;
  s.q = Eigen::Vector3d(0.3, -1.2, 0.8);
  s.lp = logp(s.q, s.grad);
  const Eigen::VectorXd start = s.q;
  CounterRng rng(3, 0, 0);
  const IterationStats st = nuts_step(s, logp, 1e-9, Eigen::VectorXd::Ones(3), 10, rng);
  CHECK((s.q - start).norm() < 1e-6);
  CHECK(st.accept_stat == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_FALSE(st.divergent);
}

TEST_CASE("funnel geometry") {
  // A centered chain can sit in the funnel's mouth for thousands of draws
  // without diverging, so counts are pooled over four long chains.
  const SamplerConfig c = single_chain(1000, 5000, 5);
  std::size_t nc_div = 0, ce_div = 0;
  for (std::size_t chain = 0; chain < 4; ++chain) {
    nc_div += count_divergent(run_chain(funnel_noncentered(), 10, c, chain));
    ce_div += count_divergent(run_chain(funnel_centered(), 10, c, chain));
  }
  MESSAGE("funnel divergences: non-centered " << nc_div << ", centered " << ce_div);
  CHECK(static_cast<double>(nc_div) < 0.001 * 20000);
  CHECK(ce_div >= 20);
  CHECK(ce_div > 10 * std::max<std::size_t>(nc_div, 1));
}

TEST_CASE("metric adaptation on a unit Gaussian") {
  const ChainOutput out = run_chain(std_gaussian(), 6, single_chain(1000, 100, 21), 0);
  for (Eigen::Index i = 0; i < 6; ++i) {
    CHECK(out.tuning.inv_mass[i] > 0.5);
    CHECK(out.tuning.inv_mass[i] < 2.0);
  }
}

TEST_CASE("higher acceptance target gives smaller steps") {
  // Correlation-free but badly scaled target so the step size matters.
  const LogDensity logp = [](const Eigen::VectorXd& q, Eigen::VectorXd& g) {
    Eigen::VectorXd s(3);
    s << 1.0, 0.1, 3.0;
    g = -(q.array() / s.array().square()).matrix();
    return -0.5 * (q.array() / s.array()).square().sum();
  };
  SamplerConfig lo = single_chain(500, 10, 9), hi = lo;
  lo.target_accept = 0.6;
  hi.target_accept = 0.99;
  CHECK(run_chain(logp, 3, hi, 0).tuning.step_size < run_chain(logp, 3, lo, 0).tuning.step_size);
}

TEST_CASE("zero-variance window") {
  std::vector<Eigen::VectorXd> window(30, Eigen::Vector2d(1.0, 2.0));
  try {
    estimate_inv_mass(window);
    FAIL("expected AdaptationFailed");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AdaptationFailed);
  }
  window[3] = Eigen::Vector2d(1.5, 2.5);
  CHECK_NOTHROW(estimate_inv_mass(window));
}

TEST_CASE("warmup windows") {
  const auto ends = WindowSchedule::window_ends_for(1000);
  // Zero-based iteration indices.
  const std::vector<std::size_t> expected{99, 149, 249, 449, 949};
  CHECK(ends == expected);
  CHECK(WindowSchedule::window_ends_for(150) == std::vector<std::size_t>{99});
}

TEST_CASE("1-D Kolmogorov-Smirnov distance") {
  const ChainOutput out = run_chain(std_gaussian(), 1, single_chain(1000, 10000, 77), 0);
  std::vector<double> x;
  for (const auto& q : out.draws) x.push_back(q[0]);
  std::sort(x.begin(), x.end());
  double d = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = 0.5 * std::erfc(-x[i] / std::sqrt(2.0));
    d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(f - static_cast<double>(i + 1) / n)});
  }
  MESSAGE("KS distance " << d);
  CHECK(d < 0.02);
}

TEST_CASE("pooled model recovers its coefficients") {
  const SimulatedDesign sim = simulate_design(small_pooled_dgp());
  const ModelSpec spec = make_model_spec(Variant::Pooled, sim.design);
  SamplerConfig c;
  c.n_chains = 2;
  c.n_warmup = 500;
  c.n_samples = 500;
  c.seed = 3;
  const PosteriorDraws draws = run_chains(sim.design, spec, c);
  CHECK(draws.chains == 2);
  CHECK(draws.iterations == 500);
  CHECK(draws.stats.size() == 1000);
  for (const auto& [label, truth] : sim.truth) {
    const auto p = draws.index_of(label);
    double m = 0.0, m2 = 0.0;
    for (std::size_t ch = 0; ch < 2; ++ch) {
      for (std::size_t i = 0; i < 500; ++i) {
        m += draws.at(ch, i, p);
        m2 += draws.at(ch, i, p) * draws.at(ch, i, p);
      }
    }
    m /= 1000.0;
    const double sd = std::sqrt(m2 / 1000.0 - m * m);
    CHECK_MESSAGE(std::abs(m - truth) < 3.0 * sd, label << ": mean " << m << " sd " << sd << " truth " << truth);
  }
}

TEST_CASE("determinism across runs and thread counts") {
  const SimulatedDesign sim = simulate_design(small_pooled_dgp());
  const ModelSpec spec = make_model_spec(Variant::RandomIntercepts, sim.design);
  SamplerConfig c;
  c.n_chains = 3;
  c.n_warmup = 150;
  c.n_samples = 100;
  c.seed = 8;
  c.n_threads = 1;
  const PosteriorDraws a = run_chains(sim.design, spec, c);
  const PosteriorDraws b = run_chains(sim.design, spec, c);
  c.n_threads = 3;
  const PosteriorDraws t = run_chains(sim.design, spec, c);
  CHECK(a.values == b.values);
  CHECK(a.values == t.values);
  CHECK(a.labels == t.labels);
  c.seed = 9;
  CHECK(run_chains(sim.design, spec, c).values != a.values);
}

TEST_CASE("worker count") {
  SamplerConfig c;
  c.n_threads = 3;
  CHECK(worker_count(c) == 3);
  c.n_threads = 0;
  setenv("THERMOPOOL_THREADS", "2", 1);
  CHECK(worker_count(c) == 2);
  unsetenv("THERMOPOOL_THREADS");
  CHECK(worker_count(c) >= 1);
}

TEST_CASE("prior-only sampling matches the prior") {
  std::mt19937_64 rng(12);
  const DesignMatrix d = random_design(4, 5, 2, rng);
  ModelSpec spec = make_model_spec(Variant::RandomSlopes, d);
  spec.likelihood_weight = 0.0;
  SamplerConfig c;
  c.n_warmup = 500;
  c.n_samples = 1000;
  c.seed = 4;
  const PosteriorDraws draws = run_chains(d, spec, c);
  for (const char* label : {"alpha", "nu", "beta[b0]", "gamma[log_gdp]"}) {
    const auto p = draws.index_of(label);
    double m = 0.0, m2 = 0.0;
    const double n = static_cast<double>(draws.total_draws());
    for (std::size_t ch = 0; ch < draws.chains; ++ch) {
      for (std::size_t i = 0; i < draws.iterations; ++i) {
        m += draws.at(ch, i, p);
        m2 += draws.at(ch, i, p) * draws.at(ch, i, p);
      }
    }
    m /= n;
    const double sd = std::sqrt(m2 / n - m * m);
    CHECK_MESSAGE(std::abs(m) < 0.1, label << " mean " << m);
    CHECK_MESSAGE(std::abs(sd - 1.0) < 0.1, label << " sd " << sd);
  }
}

TEST_CASE("simulation-based calibration of the random-slopes model") {
  // Truth drawn from the prior, data from the likelihood, ranks of the truth
  // among thinned posterior draws should be uniform.
  std::mt19937_64 rng(2024);
  DesignMatrix d = random_design(4, 5, 1, rng);
  ModelSpec spec = make_model_spec(Variant::RandomSlopes, d);
  spec.prior.sigma_e_scale = 1.0;  // fixed rather than data-derived
  const auto lay = make_layout(spec, d);
  const std::vector<std::string> tracked{"alpha", "nu", "beta[b0]", "sigma_e", "sd[Intercept]"};
  constexpr int kReps = 50, kBins = 5, kKeep = 99;
  std::vector<std::vector<int>> counts(tracked.size(), std::vector<int>(kBins, 0));
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int rep = 0; rep < kReps; ++rep) {
    const ConstrainedParams truth = sample_prior(spec, lay, rng);
    const Eigen::VectorXd row = constrained_row(truth, lay);
    const Eigen::VectorXd mu = linear_predictor(row, lay, d);
    for (Eigen::Index r = 0; r < mu.size(); ++r) d.response[r] = mu[r] + truth.sigma_e * n01(rng);
    SamplerConfig c;
    c.n_chains = 1;
    c.n_warmup = 300;
    c.n_samples = 990;
    c.seed = 100 + static_cast<std::uint64_t>(rep);
    c.n_threads = 1;
    const PosteriorDraws draws = run_chains(d, spec, c);
    for (std::size_t t = 0; t < tracked.size(); ++t) {
      const auto p = draws.index_of(tracked[t]);
      const double v = row[static_cast<Eigen::Index>(lay.index_of(tracked[t]))];
      int rank = 0;
      for (int i = 0; i < kKeep; ++i) rank += draws.at(0, static_cast<std::size_t>(i) * 10, p) < v;
      ++counts[t][rank * kBins / (kKeep + 1)];
    }
  }
  const boost::math::chi_squared chi(kBins - 1);
  for (std::size_t t = 0; t < tracked.size(); ++t) {
    double stat = 0.0;
    const double e = static_cast<double>(kReps) / kBins;
    for (const int o : counts[t]) stat += (o - e) * (o - e) / e;
    const double p = boost::math::cdf(boost::math::complement(chi, stat));
    CHECK_MESSAGE(p > 0.01, tracked[t] << ": chi-square " << stat << ", p " << p);
  }
}
