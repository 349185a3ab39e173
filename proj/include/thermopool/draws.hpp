#ifndef THERMOPOOL_DRAWS_HPP
#define THERMOPOOL_DRAWS_HPP

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace thermopool {

struct IterationStats {
  bool divergent = false;
  int treedepth = 0;
  int n_leapfrog = 0;
  double accept_stat = 0.0;
  double energy = 0.0;
  double step_size = 0.0;
  double lp = 0.0;
};

/// Post-warmup draws in constrained space, laid out [chain][iteration][param].
struct PosteriorDraws {
  std::vector<std::string> labels;
  std::size_t chains = 0;
  std::size_t iterations = 0;
  std::vector<double> values;
  std::vector<IterationStats> stats;  // [chain][iteration]
  std::map<std::string, std::string> metadata;

  std::size_t n_params() const { return labels.size(); }
  std::size_t total_draws() const { return chains * iterations; }
  std::size_t index_of(std::string_view label) const;  // throws InvalidConfig

  double& at(std::size_t chain, std::size_t iter, std::size_t param) {
    return values[(chain * iterations + iter) * labels.size() + param];
  }
  double at(std::size_t chain, std::size_t iter, std::size_t param) const {
    return values[(chain * iterations + iter) * labels.size() + param];
  }

  Eigen::VectorXd row(std::size_t chain, std::size_t iter) const;

  /// iterations x chains matrix of one parameter.
  Eigen::MatrixXd chain_matrix(std::size_t param) const;

  std::size_t divergences() const;

  /// Chains reordered by `perm` (perm[new] = old).
  PosteriorDraws permute_chains(const std::vector<std::size_t>& perm) const;
};

/// Text header (labels, dimensions, metadata) terminated by "end_header\n",
/// followed by little-endian doubles: for each chain and iteration, the
/// parameter values then seven sampler statistics.
void write_draws(const PosteriorDraws& draws, const std::filesystem::path& path);
PosteriorDraws read_draws(const std::filesystem::path& path);

/// chain,iteration,<labels>,divergent,treedepth,n_leapfrog,accept_stat,energy,step_size,lp
void write_draws_csv(const PosteriorDraws& draws, const std::filesystem::path& path);

}  // namespace thermopool

#endif  // THERMOPOOL_DRAWS_HPP
