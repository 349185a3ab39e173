#ifndef THERMOPOOL_SAMPLER_HPP
#define THERMOPOOL_SAMPLER_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "thermopool/draws.hpp"
#include "thermopool/inference.hpp"
#include "thermopool/rng.hpp"

namespace thermopool {

struct SamplerConfig {
  std::size_t n_chains = 4;
  std::size_t n_warmup = 1000;
  std::size_t n_samples = 1000;
  double target_accept = 0.8;
  int max_treedepth = 10;
  std::uint64_t seed = 42;
  double init_radius = 2.0;
  std::size_t n_threads = 0;  // 0: THERMOPOOL_THREADS or hardware concurrency

  void validate() const;  // throws InvalidConfig
};

/// Log density with gradient; returns -inf for points outside the support.
using LogDensity = std::function<double(const Eigen::VectorXd& q, Eigen::VectorXd& grad)>;

struct Tuning {
  double step_size = 1.0;
  Eigen::VectorXd inv_mass;
  Eigen::VectorXd position;  // last warmup position, used to start a warm chain
};

struct NutsState {
  Eigen::VectorXd q;
  double lp = 0.0;
  Eigen::VectorXd grad;
};

/// One multinomial NUTS transition with a diagonal metric. Momentum is
/// resampled from `rng`; the new state replaces `state`.
IterationStats nuts_step(NutsState& state, const LogDensity& logp, double step_size,
                         const Eigen::VectorXd& inv_mass, int max_treedepth, CounterRng& rng);

/// Nesterov dual averaging of log step size.
class DualAveraging {
 public:
  explicit DualAveraging(double target, double gamma = 0.05, double t0 = 10.0,
                         double kappa = 0.75);

  void set_mu(double mu) { mu_ = mu; }
  void restart();
  /// Returns the next step size after observing an acceptance statistic.
  double learn(double accept_stat);
  /// Final step size, exp of the averaged iterate.
  double final_step_size() const;

 private:
  double target_, gamma_, t0_, kappa_;
  double mu_ = 0.0;
  double counter_ = 0.0, s_bar_ = 0.0, x_bar_ = 0.0;
};

/// Warmup schedule: initial buffer 75, slow windows starting at 25 and
/// doubling (the last one stretched to the terminal buffer), terminal buffer 50.
class WindowSchedule {
 public:
  explicit WindowSchedule(std::size_t n_warmup, std::size_t init_buffer = 75,
                          std::size_t term_buffer = 50, std::size_t base_window = 25);

  bool in_window(std::size_t iteration) const;
  bool window_ends(std::size_t iteration) const;
  /// Must be called once at every window end; moves to the next window.
  void advance(std::size_t iteration);

  /// Zero-based iterations at which a metric update happens, for inspection.
  static std::vector<std::size_t> window_ends_for(std::size_t n_warmup);

 private:
  std::size_t n_warmup_, init_buffer_, term_buffer_, window_size_, next_end_;
};

/// Regularized diagonal inverse metric from the draws of one slow window:
/// (n / (n + 5)) var + 1e-3 (5 / (n + 5)). Throws AdaptationFailed if any
/// coordinate has zero variance or the result is not finite.
Eigen::VectorXd estimate_inv_mass(const std::vector<Eigen::VectorXd>& window);

/// Doubling/halving search for a step size whose one-step acceptance crosses 0.8.
double find_initial_step_size(const NutsState& state, const LogDensity& logp, double step_size,
                              const Eigen::VectorXd& inv_mass, CounterRng& rng);

struct ChainOutput {
  std::vector<Eigen::VectorXd> draws;  // unconstrained, post-warmup
  std::vector<IterationStats> stats;
  Tuning tuning;
};

/// Runs one chain: initialization (uniform within +-init_radius unless a warm
/// position is given), warmup with adaptation, then sampling.
///
/// With `warm`, the chain starts from its step size, metric and position;
/// a warmup shorter than 150 iterations then adapts the step size only.
ChainOutput run_chain(const LogDensity& logp, std::size_t dim, const SamplerConfig& config,
                      std::size_t chain_id, const Tuning* warm = nullptr);

/// Runs config.n_chains chains of the model in parallel and returns the
/// post-warmup draws in constrained space. Identical inputs and seed give
/// identical output regardless of thread count.
PosteriorDraws run_chains(const DesignMatrix& design, const ModelSpec& spec,
                          const SamplerConfig& config,
                          const std::vector<Tuning>* warm = nullptr,
                          std::vector<Tuning>* tuning_out = nullptr);

/// Worker count: config value, else THERMOPOOL_THREADS, else hardware.
std::size_t worker_count(const SamplerConfig& config);

}  // namespace thermopool

#endif  // THERMOPOOL_SAMPLER_HPP
