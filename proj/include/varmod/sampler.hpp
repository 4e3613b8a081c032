#ifndef VARMOD_SAMPLER_HPP
#define VARMOD_SAMPLER_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "varmod/rng.hpp"

namespace varmod {

/// Target density: returns log p(position) and fills `grad` with its
/// gradient. Must be safe to call concurrently from several chains.
using LogProbFn =
    std::function<double(std::span<const double>, std::span<double>)>;

/// Optional per-draw transform (e.g. unconstrained -> constrained) applied
/// before a draw is stored.
using TransformFn =
    std::function<void(std::span<const double>, std::span<double>)>;

struct ChainConfig {
  int chains = 4;
  int warmup = 1000;
  long total_post_warmup = 4000;  // pre-thinning iterations summed over chains
  int thin = 1;
  std::uint64_t seed = 0;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  double init_step = 0.0;  // 0 = search for a reasonable value
  int threads = 0;         // 0 = one thread per chain up to the hardware

  void validate() const;
  long iters_per_chain() const { return total_post_warmup / chains; }
  long retained_per_chain() const { return iters_per_chain() / thin; }
};

/// Post-warmup, thinned draws on the transformed (constrained) scale,
/// plus per-chain sampler telemetry.
struct PosteriorDraws {
  std::vector<std::string> names;
  int chains = 0;
  long iterations = 0;          // retained draws per chain
  std::vector<double> values;   // [chain][iteration][parameter]
  std::vector<long> divergence_count;
  std::vector<double> step_size;              // adapted step size per chain
  std::vector<std::vector<double>> inv_mass;  // adapted metric per chain
  std::vector<double> accept_mean;            // post-warmup mean accept stat

  std::size_t n_params() const { return names.size(); }

  double value(int chain, long iter, std::size_t param) const {
    return values[(static_cast<std::size_t>(chain) * static_cast<std::size_t>(iterations) +
                   static_cast<std::size_t>(iter)) *
                      names.size() +
                  param];
  }

  std::size_t param_index(const std::string& name) const;

  /// One vector per chain for a single parameter (diagnostics layout).
  std::vector<std::vector<double>> parameter_chains(std::size_t param) const;

  /// All chains concatenated, chain-major, for one parameter.
  std::vector<double> pooled(std::size_t param) const;
};

/// Position with cached target value and gradient.
struct PhasePoint {
  std::vector<double> position;
  std::vector<double> gradient;
  double logp = 0.0;
};

/// One leapfrog step against -log p as the potential, with an optional
/// diagonal inverse metric (unit metric when empty). Returns the updated
/// (position, momentum); non-finite excursions are left to the caller.
std::pair<std::vector<double>, std::vector<double>> leapfrog(
    std::span<const double> position, std::span<const double> momentum,
    double step, const LogProbFn& target,
    std::span<const double> inv_mass = {});

struct NutsResult {
  double accept_stat = 0.0;  // mean Metropolis statistic over the trajectory
  int depth = 0;             // doublings performed
  bool divergent = false;
  long n_leapfrog = 0;
};

/// One No-U-Turn transition (multinomial variant) updating `state` in place.
/// Divergences (energy error > max_energy_error or non-finite values) end
/// tree growth and are reported, never thrown.
NutsResult nuts_transition(PhasePoint& state, double step,
                           std::span<const double> inv_mass, Rng& rng,
                           const LogProbFn& target, int max_tree_depth = 10,
                           double max_energy_error = 1000.0);

/// Dual-averaging step-size controller (gamma = 0.05, t0 = 10, kappa = 0.75).
class DualAveraging {
 public:
  DualAveraging(double target_accept, double init_step);

  void update(double accept_stat);
  void restart(double init_step);
  double current() const { return std::exp(log_step_); }
  double adapted() const { return std::exp(log_step_avg_); }

 private:
  double target_;
  double mu_;
  double log_step_;
  double log_step_avg_ = 0.0;
  double h_avg_ = 0.0;
  long iter_ = 0;
};

/// Warmup layout: a step-size-only burn phase or the windowed schedule
/// (initial fast buffer, doubling slow windows for the metric, terminal
/// fast buffer).
struct WarmupSchedule {
  enum class Kind { none, step_only, windowed };

  Kind kind = Kind::none;
  int warmup = 0;
  int init_buffer = 0;
  int term_buffer = 0;
  std::vector<int> window_ends;  // warmup iterations ending a slow window

  /// Throws a config error when warmup cannot fit the window schedule
  /// (minimum init 75 + window 25 + terminal 50 = 150 iterations).
  static WarmupSchedule windowed(int warmup, int init_buffer = 75,
                                 int term_buffer = 50, int base_window = 25);
  static WarmupSchedule step_only(int warmup);
  static WarmupSchedule none();

  /// Pick the schedule run_chains uses for a given warmup length.
  static WarmupSchedule automatic(int warmup);

  bool in_slow_window(int warmup_iter) const;
  bool is_window_end(int warmup_iter) const;
};

/// Regularized sample variances used as the diagonal inverse metric
/// (shrunk toward 1e-3 exactly as a short window warrants).
std::vector<double> regularized_variance(const std::vector<std::vector<double>>& draws);

/// Runs `config.chains` independent NUTS chains. Per-chain RNG streams are
/// derived from (seed, chain index), so results are identical no matter how
/// chains are scheduled onto threads. Warmup draws are discarded and
/// thinning applied; draws are stored through `transform` when given.
PosteriorDraws run_chains(const LogProbFn& target, std::size_t dim,
                          const ChainConfig& config,
                          const std::vector<std::vector<double>>& inits,
                          std::vector<std::string> names = {},
                          const TransformFn& transform = {});

}  // namespace varmod

#endif
