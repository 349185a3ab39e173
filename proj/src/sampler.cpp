#include "thermopool/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <random>
#include <thread>

#include "thermopool/csv.hpp"
#include "thermopool/error.hpp"

namespace thermopool {

namespace {

constexpr double kMaxDeltaH = 1000.0;
constexpr std::uint64_t kInitCounter = 1ULL << 40;
constexpr std::uint64_t kStepSearchCounter = 1ULL << 41;
constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

struct PhasePoint {
  Eigen::VectorXd q;
  Eigen::VectorXd p;
  double lp = 0.0;
  Eigen::VectorXd grad;
};

struct Trajectory {
  const LogDensity& logp;
  const Eigen::VectorXd& inv_mass;
  double step;  // signed within build_tree
  double H0;
  CounterRng& rng;
  int n_leapfrog = 0;
  double sum_metro_prob = 0.0;
  bool divergent = false;

  double hamiltonian(const PhasePoint& z) const {
    const double h = -z.lp + 0.5 * z.p.dot(inv_mass.cwiseProduct(z.p));
    return std::isnan(h) ? kInf : h;
  }

  Eigen::VectorXd p_sharp(const PhasePoint& z) const { return inv_mass.cwiseProduct(z.p); }

  void leapfrog(PhasePoint& z, double eps) const {
    z.p += 0.5 * eps * z.grad;
    z.q += eps * inv_mass.cwiseProduct(z.p);
    z.lp = logp(z.q, z.grad);
    if (!std::isfinite(z.lp)) {
      z.lp = -kInf;
      z.grad.setZero();
    }
    z.p += 0.5 * eps * z.grad;
  }

  static bool criterion(const Eigen::VectorXd& p_sharp_minus, const Eigen::VectorXd& p_sharp_plus,
                        const Eigen::VectorXd& rho) {
    return p_sharp_plus.dot(rho) > 0 && p_sharp_minus.dot(rho) > 0;
  }

  bool build_tree(int depth, PhasePoint& z, PhasePoint& z_propose, Eigen::VectorXd& p_sharp_beg,
                  Eigen::VectorXd& p_sharp_end, Eigen::VectorXd& rho, Eigen::VectorXd& p_beg,
                  Eigen::VectorXd& p_end, double sign, double& log_sum_weight) {
    if (depth == 0) {
      leapfrog(z, sign * step);
      ++n_leapfrog;
      const double h = hamiltonian(z);
      if (h - H0 > kMaxDeltaH) divergent = true;
      log_sum_weight = log_sum_exp(log_sum_weight, H0 - h);
      sum_metro_prob += H0 - h > 0 ? 1.0 : std::exp(H0 - h);
      z_propose = z;
      p_sharp_beg = p_sharp(z);
      p_sharp_end = p_sharp_beg;
      rho += z.p;
      p_beg = z.p;
      p_end = p_beg;
      return !divergent;
    }

    const auto n = z.q.size();
    double log_sum_weight_init = -kInf;
    Eigen::VectorXd p_init_end(n), p_sharp_init_end(n);
    Eigen::VectorXd rho_init = Eigen::VectorXd::Zero(n);
    if (!build_tree(depth - 1, z, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg,
                    p_init_end, sign, log_sum_weight_init)) {
      return false;
    }

    PhasePoint z_propose_final = z;
    double log_sum_weight_final = -kInf;
    Eigen::VectorXd p_final_beg(n), p_sharp_final_beg(n);
    Eigen::VectorXd rho_final = Eigen::VectorXd::Zero(n);
    if (!build_tree(depth - 1, z, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final,
                    p_final_beg, p_end, sign, log_sum_weight_final)) {
      return false;
    }

    const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
    if (log_sum_weight_final > log_sum_weight_subtree) {
      z_propose = z_propose_final;
    } else if (rng.uniform() < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
      z_propose = z_propose_final;
    }

    const Eigen::VectorXd rho_subtree = rho_init + rho_final;
    rho += rho_subtree;
    bool persist = criterion(p_sharp_beg, p_sharp_end, rho_subtree);
    persist = persist && criterion(p_sharp_beg, p_sharp_final_beg, rho_init + p_final_beg);
    persist = persist && criterion(p_sharp_init_end, p_sharp_end, rho_final + p_init_end);
    return persist;
  }
};

void sample_momentum(PhasePoint& z, const Eigen::VectorXd& inv_mass, CounterRng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  z.p.resize(z.q.size());
  for (Eigen::Index i = 0; i < z.q.size(); ++i) z.p[i] = normal(rng) / std::sqrt(inv_mass[i]);
}

}  // namespace

void SamplerConfig::validate() const {
  if (n_chains < 1 || n_samples < 1) {
    throw Error(ErrorCode::InvalidConfig, "chains and samples must be at least 1");
  }
  if (!(target_accept > 0.0 && target_accept < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "target_accept must lie in (0, 1)");
  }
  if (max_treedepth < 1) throw Error(ErrorCode::InvalidConfig, "max_treedepth must be >= 1");
  if (!(init_radius > 0.0)) throw Error(ErrorCode::InvalidConfig, "init_radius must be > 0");
}

IterationStats nuts_step(NutsState& state, const LogDensity& logp, double step_size,
                         const Eigen::VectorXd& inv_mass, int max_treedepth, CounterRng& rng) {
  PhasePoint z{state.q, {}, state.lp, state.grad};
  sample_momentum(z, inv_mass, rng);

  Trajectory tr{logp, inv_mass, step_size, 0.0, rng};
  tr.H0 = tr.hamiltonian(z);

  PhasePoint z_fwd = z, z_bck = z, z_sample = z, z_propose = z;
  Eigen::VectorXd p_fwd_fwd = z.p, p_fwd_bck = z.p, p_bck_fwd = z.p, p_bck_bck = z.p;
  Eigen::VectorXd p_sharp_fwd_fwd = tr.p_sharp(z);
  Eigen::VectorXd p_sharp_fwd_bck = p_sharp_fwd_fwd, p_sharp_bck_fwd = p_sharp_fwd_fwd,
                  p_sharp_bck_bck = p_sharp_fwd_fwd;
  Eigen::VectorXd rho = z.p;
  double log_sum_weight = 0.0;
  int depth = 0;
  const auto n = z.q.size();

  while (depth < max_treedepth) {
    Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(n), rho_bck = Eigen::VectorXd::Zero(n);
    bool valid_subtree = false;
    double log_sum_weight_subtree = -kInf;
    if (rng.uniform() > 0.5) {
      rho_bck = rho;
      p_bck_fwd = p_fwd_bck;
      p_sharp_bck_fwd = p_sharp_fwd_bck;
      PhasePoint zz = z_fwd;
      valid_subtree = tr.build_tree(depth, zz, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd,
                                    rho_fwd, p_fwd_bck, p_fwd_fwd, 1.0, log_sum_weight_subtree);
      z_fwd = std::move(zz);
    } else {
      rho_fwd = rho;
      p_fwd_bck = p_bck_fwd;
      p_sharp_fwd_bck = p_sharp_bck_fwd;
      PhasePoint zz = z_bck;
      valid_subtree = tr.build_tree(depth, zz, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck,
                                    rho_bck, p_bck_fwd, p_bck_bck, -1.0, log_sum_weight_subtree);
      z_bck = std::move(zz);
    }
    if (!valid_subtree) break;
    ++depth;

    if (log_sum_weight_subtree > log_sum_weight) {
      z_sample = z_propose;
    } else if (rng.uniform() < std::exp(log_sum_weight_subtree - log_sum_weight)) {
      z_sample = z_propose;
    }
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

    rho = rho_bck + rho_fwd;
    bool persist = Trajectory::criterion(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
    persist = persist && Trajectory::criterion(p_sharp_bck_bck, p_sharp_fwd_bck, rho_bck + p_fwd_bck);
    persist = persist && Trajectory::criterion(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_fwd + p_bck_fwd);
    if (!persist) break;
  }

  IterationStats st;
  st.divergent = tr.divergent;
  st.treedepth = depth;
  st.n_leapfrog = tr.n_leapfrog;
  st.accept_stat = tr.n_leapfrog ? tr.sum_metro_prob / tr.n_leapfrog : 0.0;
  st.energy = tr.hamiltonian(z_sample);
  st.step_size = step_size;
  st.lp = z_sample.lp;
  state.q = std::move(z_sample.q);
  state.lp = z_sample.lp;
  state.grad = std::move(z_sample.grad);
  return st;
}

DualAveraging::DualAveraging(double target, double gamma, double t0, double kappa)
    : target_(target), gamma_(gamma), t0_(t0), kappa_(kappa) {}

void DualAveraging::restart() {
  counter_ = 0.0;
  s_bar_ = 0.0;
  x_bar_ = 0.0;
}

double DualAveraging::learn(double accept_stat) {
  counter_ += 1.0;
  accept_stat = std::min(accept_stat, 1.0);
  const double eta = 1.0 / (counter_ + t0_);
  s_bar_ = (1.0 - eta) * s_bar_ + eta * (target_ - accept_stat);
  const double x = mu_ - s_bar_ * std::sqrt(counter_) / gamma_;
  const double x_eta = std::pow(counter_, -kappa_);
  x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
  return std::exp(x);
}

double DualAveraging::final_step_size() const { return std::exp(x_bar_); }

WindowSchedule::WindowSchedule(std::size_t n_warmup, std::size_t init_buffer,
                               std::size_t term_buffer, std::size_t base_window)
    : n_warmup_(n_warmup),
      init_buffer_(init_buffer),
      term_buffer_(term_buffer),
      window_size_(base_window),
      next_end_(init_buffer + base_window - 1) {
  if (n_warmup < init_buffer + term_buffer + base_window) {
    throw Error(ErrorCode::InvalidConfig,
                "warmup of " + std::to_string(n_warmup) + " iterations is shorter than " +
                    std::to_string(init_buffer + term_buffer + base_window));
  }
}

bool WindowSchedule::in_window(std::size_t it) const {
  return it >= init_buffer_ && it < n_warmup_ - term_buffer_ && it != n_warmup_;
}

bool WindowSchedule::window_ends(std::size_t it) const {
  return it == next_end_ && it != n_warmup_;
}

void WindowSchedule::advance(std::size_t it) {
  const std::size_t last = n_warmup_ - term_buffer_ - 1;
  if (next_end_ == last) return;
  window_size_ *= 2;
  next_end_ = it + window_size_;
  if (next_end_ != last) {
    const std::size_t boundary = next_end_ + 2 * window_size_;
    if (boundary >= n_warmup_ - term_buffer_) next_end_ = last;
  }
}

std::vector<std::size_t> WindowSchedule::window_ends_for(std::size_t n_warmup) {
  WindowSchedule s(n_warmup);
  std::vector<std::size_t> ends;
  for (std::size_t it = 0; it < n_warmup; ++it) {
    if (s.window_ends(it)) {
      ends.push_back(it);
      s.advance(it);
    }
  }
  return ends;
}

Eigen::VectorXd estimate_inv_mass(const std::vector<Eigen::VectorXd>& window) {
  if (window.size() < 2) throw Error(ErrorCode::AdaptationFailed, "window has fewer than 2 draws");
  const auto dim = window.front().size();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim), m2 = Eigen::VectorXd::Zero(dim);
  double n = 0.0;
  for (const auto& q : window) {
    n += 1.0;
    const Eigen::VectorXd delta = q - mean;
    mean += delta / n;
    m2 += delta.cwiseProduct(q - mean);
  }
  const Eigen::VectorXd var = m2 / (n - 1.0);
  for (Eigen::Index i = 0; i < dim; ++i) {
    if (!(var[i] > 0.0)) {
      throw Error(ErrorCode::AdaptationFailed,
                  "coordinate " + std::to_string(i) + " has zero variance in a warmup window");
    }
  }
  Eigen::VectorXd out = (n / (n + 5.0)) * var;
  out.array() += 1e-3 * (5.0 / (n + 5.0));
  if (!out.allFinite()) throw Error(ErrorCode::AdaptationFailed, "non-finite metric");
  return out;
}

double find_initial_step_size(const NutsState& state, const LogDensity& logp, double step_size,
                              const Eigen::VectorXd& inv_mass, CounterRng& rng) {
  if (step_size == 0.0 || step_size > 1e7 || std::isnan(step_size)) return step_size;
  Trajectory tr{logp, inv_mass, step_size, 0.0, rng};
  auto delta_h = [&] {
    PhasePoint z{state.q, {}, state.lp, state.grad};
    sample_momentum(z, inv_mass, rng);
    const double h0 = tr.hamiltonian(z);
    tr.leapfrog(z, step_size);
    return h0 - tr.hamiltonian(z);
  };
  const double threshold = std::log(0.8);
  const int direction = delta_h() > threshold ? 1 : -1;
  while (true) {
    const double d = delta_h();
    if (direction == 1 && !(d > threshold)) break;
    if (direction == -1 && !(d < threshold)) break;
    step_size = direction == 1 ? 2.0 * step_size : 0.5 * step_size;
    if (step_size > 1e7) throw Error(ErrorCode::AdaptationFailed, "posterior appears improper");
    if (step_size == 0.0) throw Error(ErrorCode::AdaptationFailed, "no acceptably small step size");
  }
  return step_size;
}

ChainOutput run_chain(const LogDensity& logp, std::size_t dim, const SamplerConfig& config,
                      std::size_t chain_id, const Tuning* warm) {
  config.validate();
  const auto n = static_cast<Eigen::Index>(dim);
  const bool have_warm = warm && warm->inv_mass.size() == n;
  if (config.n_warmup > 0 && config.n_warmup < 150 && !have_warm) {
    throw Error(ErrorCode::InvalidConfig, "warmup must be at least 150 iterations");
  }

  NutsState state;
  state.grad.resize(n);
  if (have_warm && warm->position.size() == n) {
    state.q = warm->position;
    state.lp = logp(state.q, state.grad);
  } else {
    CounterRng rng(config.seed, chain_id, kInitCounter);
    std::uniform_real_distribution<double> unif(-config.init_radius, config.init_radius);
    state.lp = -kInf;
    for (int attempt = 0; attempt < 100; ++attempt) {
      state.q.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) state.q[i] = unif(rng);
      state.lp = logp(state.q, state.grad);
      if (std::isfinite(state.lp) && state.grad.allFinite()) break;
    }
  }
  if (!std::isfinite(state.lp)) {
    throw Error(ErrorCode::AdaptationFailed, "no finite initial point for chain " +
                                                 std::to_string(chain_id));
  }

  Eigen::VectorXd inv_mass = have_warm ? warm->inv_mass : Eigen::VectorXd::Ones(n);
  double eps = have_warm ? warm->step_size : 1.0;
  ChainOutput out;

  if (config.n_warmup > 0) {
    if (!have_warm) {
      CounterRng rng(config.seed, chain_id, kStepSearchCounter);
      eps = find_initial_step_size(state, logp, eps, inv_mass, rng);
    }
    DualAveraging da(config.target_accept);
    da.set_mu(std::log(10.0 * eps));
    const bool metric = config.n_warmup >= 150;
    std::optional<WindowSchedule> schedule;
    if (metric) schedule.emplace(config.n_warmup);
    std::vector<Eigen::VectorXd> window;
    for (std::size_t it = 0; it < config.n_warmup; ++it) {
      CounterRng rng(config.seed, chain_id, it);
      const auto st = nuts_step(state, logp, eps, inv_mass, config.max_treedepth, rng);
      eps = da.learn(st.accept_stat);
      if (metric) {
        if (schedule->in_window(it)) window.push_back(state.q);
        if (schedule->window_ends(it)) {
          schedule->advance(it);
          inv_mass = estimate_inv_mass(window);
          window.clear();
          CounterRng search(config.seed, chain_id, kStepSearchCounter + 1 + it);
          eps = find_initial_step_size(state, logp, eps, inv_mass, search);
          da.set_mu(std::log(10.0 * eps));
          da.restart();
        }
      }
      if (!std::isfinite(eps) || eps <= 0.0) {
        throw Error(ErrorCode::AdaptationFailed, "step size diverged in chain " +
                                                     std::to_string(chain_id));
      }
    }
    eps = da.final_step_size();
    if (!std::isfinite(eps) || eps <= 0.0) {
      throw Error(ErrorCode::AdaptationFailed, "non-finite adapted step size");
    }
  }

  out.tuning.step_size = eps;
  out.tuning.inv_mass = inv_mass;
  out.tuning.position = state.q;
  out.draws.reserve(config.n_samples);
  out.stats.reserve(config.n_samples);
  for (std::size_t it = 0; it < config.n_samples; ++it) {
    CounterRng rng(config.seed, chain_id, config.n_warmup + it);
    out.stats.push_back(nuts_step(state, logp, eps, inv_mass, config.max_treedepth, rng));
    out.draws.push_back(state.q);
  }
  return out;
}

std::size_t worker_count(const SamplerConfig& config) {
  std::size_t n = config.n_threads;
  if (n == 0) {
    if (const char* env = std::getenv("THERMOPOOL_THREADS")) {
      try {
        n = static_cast<std::size_t>(std::max<std::int64_t>(0, parse_int(env, "THERMOPOOL_THREADS")));
      } catch (const Error&) {
        n = 0;
      }
    }
  }
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(n, config.n_chains));
}

PosteriorDraws run_chains(const DesignMatrix& design, const ModelSpec& spec,
                          const SamplerConfig& config, const std::vector<Tuning>* warm,
                          std::vector<Tuning>* tuning_out) {
  config.validate();
  const ParameterLayout layout = make_layout(spec, design);
  const LogDensity logp = [&](const Eigen::VectorXd& q, Eigen::VectorXd& grad) {
    return log_posterior_grad(q, design, spec, grad);
  };

  std::vector<ChainOutput> outputs(config.n_chains);
  std::vector<std::exception_ptr> errors(config.n_chains);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < config.n_chains; c = next++) {
      try {
        const Tuning* w = warm && c < warm->size() ? &(*warm)[c] : nullptr;
        outputs[c] = run_chain(logp, layout.dim, config, c, w);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = worker_count(config);
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  PosteriorDraws d;
  d.labels = layout.labels;
  d.chains = config.n_chains;
  d.iterations = config.n_samples;
  d.values.resize(d.chains * d.iterations * d.n_params());
  d.stats.reserve(d.chains * d.iterations);
  for (std::size_t c = 0; c < d.chains; ++c) {
    for (std::size_t i = 0; i < d.iterations; ++i) {
      const Eigen::VectorXd row = constrained_row(transform(outputs[c].draws[i], layout), layout);
      std::copy_n(row.data(), row.size(), &d.at(c, i, 0));
      d.stats.push_back(outputs[c].stats[i]);
    }
  }
  d.metadata["variant"] = to_string(spec.variant);
  d.metadata["prior_preset"] = to_string(spec.prior.preset);
  d.metadata["lkj_eta"] = format_double(spec.lkj_eta);
  d.metadata["sigma_e_scale"] = format_double(spec.prior.sigma_e_scale);
  d.metadata["seed"] = std::to_string(config.seed);
  d.metadata["warmup"] = std::to_string(config.n_warmup);
  d.metadata["target_accept"] = format_double(config.target_accept);
  d.metadata["max_treedepth"] = std::to_string(config.max_treedepth);
  for (std::size_t c = 0; c < d.chains; ++c) {
    d.metadata["step_size." + std::to_string(c)] = format_double(outputs[c].tuning.step_size);
  }
  if (tuning_out) {
    tuning_out->clear();
    for (auto& o : outputs) tuning_out->push_back(std::move(o.tuning));
  }
  return d;
}

}  // namespace thermopool
