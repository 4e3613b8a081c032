#include "varmod/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include "varmod/errors.hpp"

namespace varmod {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

double kinetic_energy(std::span<const double> r, std::span<const double> inv_mass) {
  double k = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) k += r[i] * r[i] * inv_mass[i];
  return 0.5 * k;
}

/// Evaluates the target, guarding against non-finite positions (the target
/// contract allows it to reject them); failures surface as logp = -inf.
double safe_eval(const LogProbFn& target, std::span<const double> q,
                 std::span<double> grad) {
  if (!all_finite(q)) return kNegInf;
  const double lp = target(q, grad);
  return std::isnan(lp) ? kNegInf : lp;
}

struct Phase {
  std::vector<double> q;
  std::vector<double> r;
  std::vector<double> grad;
  double logp = kNegInf;
};

/// In-place leapfrog with cached gradient; one target evaluation per call.
void leapfrog_inplace(Phase& z, double step, const LogProbFn& target,
                      std::span<const double> inv_mass) {
  const std::size_t d = z.q.size();
  for (std::size_t i = 0; i < d; ++i) z.r[i] += 0.5 * step * z.grad[i];
  for (std::size_t i = 0; i < d; ++i) z.q[i] += step * inv_mass[i] * z.r[i];
  z.logp = safe_eval(target, z.q, z.grad);
  for (std::size_t i = 0; i < d; ++i) z.r[i] += 0.5 * step * z.grad[i];
}

struct TransStats {
  long n_leapfrog = 0;
  double sum_metro = 0.0;
  bool divergent = false;
};

struct Subtree {
  std::vector<double> q_propose;
  std::vector<double> grad_propose;
  double logp_propose = kNegInf;
  double log_sum_weight = kNegInf;
  // Boundary copies in time order (minus = backward-most end), which is what
  // the U-turn criterion needs regardless of the direction a subtree was
  // integrated in.
  std::vector<double> q_minus, r_minus, q_plus, r_plus;
};

bool no_u_turn(std::span<const double> q_minus, std::span<const double> r_minus,
               std::span<const double> q_plus, std::span<const double> r_plus,
               std::span<const double> inv_mass) {
  double forward = 0.0, backward = 0.0;
  for (std::size_t i = 0; i < q_minus.size(); ++i) {
    const double delta = q_plus[i] - q_minus[i];
    backward += delta * inv_mass[i] * r_minus[i];
    forward += delta * inv_mass[i] * r_plus[i];
  }
  return backward >= 0.0 && forward >= 0.0;
}

/// Extends the trajectory end `z` by 2^depth leapfrog steps in the direction
/// of signed_step, building a balanced subtree. Returns false when the
/// subtree is invalid (divergence or internal U-turn).
bool build_tree(int depth, Phase& z, double signed_step, double h0,
                const LogProbFn& target, std::span<const double> inv_mass,
                double max_energy_error, Rng& rng, TransStats& stats,
                Subtree& out) {
  if (depth == 0) {
    leapfrog_inplace(z, signed_step, target, inv_mass);
    ++stats.n_leapfrog;
    double h = std::isfinite(z.logp) && all_finite(z.r)
                   ? -z.logp + kinetic_energy(z.r, inv_mass)
                   : kInf;
    if (std::isnan(h)) h = kInf;
    const double delta = h0 - h;  // > 0 means energy improved
    out.log_sum_weight = std::isfinite(h) ? delta : kNegInf;
    stats.sum_metro += std::isfinite(h) ? std::min(1.0, std::exp(delta)) : 0.0;
    out.q_propose = z.q;
    out.grad_propose = z.grad;
    out.logp_propose = z.logp;
    out.q_minus = z.q;
    out.r_minus = z.r;
    out.q_plus = z.q;
    out.r_plus = z.r;
    if (!std::isfinite(h) || h - h0 > max_energy_error) {
      stats.divergent = true;
      return false;
    }
    return true;
  }

  Subtree first;
  if (!build_tree(depth - 1, z, signed_step, h0, target, inv_mass,
                  max_energy_error, rng, stats, first))
    return false;
  Subtree second;
  if (!build_tree(depth - 1, z, signed_step, h0, target, inv_mass,
                  max_energy_error, rng, stats, second))
    return false;

  out.log_sum_weight = log_sum_exp(first.log_sum_weight, second.log_sum_weight);
  // Uniform multinomial choice between the two halves.
  bool take_second = false;
  if (second.log_sum_weight > kNegInf) {
    take_second = out.log_sum_weight == kNegInf ||
                  rng.uniform() < std::exp(second.log_sum_weight - out.log_sum_weight);
  }
  const Subtree& chosen = take_second ? second : first;
  out.q_propose = chosen.q_propose;
  out.grad_propose = chosen.grad_propose;
  out.logp_propose = chosen.logp_propose;
  // `second` extends beyond `first` along the integration direction; keep
  // the combined ends in time order.
  if (signed_step > 0.0) {
    out.q_minus = std::move(first.q_minus);
    out.r_minus = std::move(first.r_minus);
    out.q_plus = std::move(second.q_plus);
    out.r_plus = std::move(second.r_plus);
  } else {
    out.q_minus = std::move(second.q_minus);
    out.r_minus = std::move(second.r_minus);
    out.q_plus = std::move(first.q_plus);
    out.r_plus = std::move(first.r_plus);
  }
  return no_u_turn(out.q_minus, out.r_minus, out.q_plus, out.r_plus, inv_mass);
}

}  // namespace

void ChainConfig::validate() const {
  if (chains < 1) fail("config", "at least one chain required");
  if (warmup < 0) fail("config", "warmup must be non-negative");
  if (total_post_warmup < 1) fail("config", "post-warmup iteration count must be positive");
  if (total_post_warmup % chains != 0)
    fail("config", "total post-warmup iterations must be divisible by the chain count");
  if (thin < 1) fail("config", "thin must be positive");
  if ((total_post_warmup / chains) % thin != 0)
    fail("config", "thin must divide the per-chain post-warmup count");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    fail("config", "target acceptance must lie in (0, 1)");
  if (max_tree_depth < 1) fail("config", "max tree depth must be positive");
  if (warmup == 0 && !(init_step > 0.0))
    fail("config", "with no warmup an explicit step size is required");
}

std::size_t PosteriorDraws::param_index(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  fail("config", "unknown parameter name: " + name);
}

std::vector<std::vector<double>> PosteriorDraws::parameter_chains(
    std::size_t param) const {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(chains));
  for (int c = 0; c < chains; ++c) {
    out[static_cast<std::size_t>(c)].resize(static_cast<std::size_t>(iterations));
    for (long i = 0; i < iterations; ++i)
      out[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)] = value(c, i, param);
  }
  return out;
}

std::vector<double> PosteriorDraws::pooled(std::size_t param) const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(chains) * static_cast<std::size_t>(iterations));
  for (int c = 0; c < chains; ++c)
    for (long i = 0; i < iterations; ++i) out.push_back(value(c, i, param));
  return out;
}

std::pair<std::vector<double>, std::vector<double>> leapfrog(
    std::span<const double> position, std::span<const double> momentum,
    double step, const LogProbFn& target, std::span<const double> inv_mass) {
  if (!(step > 0.0) || !std::isfinite(step))
    fail("config", "leapfrog step must be positive and finite");
  if (position.size() != momentum.size())
    fail("dimension", "position and momentum lengths differ");
  std::vector<double> unit;
  if (inv_mass.empty()) {
    unit.assign(position.size(), 1.0);
    inv_mass = unit;
  }
  Phase z;
  z.q.assign(position.begin(), position.end());
  z.r.assign(momentum.begin(), momentum.end());
  z.grad.resize(position.size());
  z.logp = safe_eval(target, z.q, z.grad);
  leapfrog_inplace(z, step, target, inv_mass);
  return {std::move(z.q), std::move(z.r)};
}

NutsResult nuts_transition(PhasePoint& state, double step,
                           std::span<const double> inv_mass, Rng& rng,
                           const LogProbFn& target, int max_tree_depth,
                           double max_energy_error) {
  const std::size_t dim = state.position.size();
  std::vector<double> unit;
  if (inv_mass.empty()) {
    unit.assign(dim, 1.0);
    inv_mass = unit;
  }

  Phase plus;
  plus.q = state.position;
  plus.grad = state.gradient;
  plus.logp = state.logp;
  plus.r.resize(dim);
  for (std::size_t i = 0; i < dim; ++i)
    plus.r[i] = rng.normal() / std::sqrt(inv_mass[i]);
  Phase minus = plus;

  const double h0 = -plus.logp + kinetic_energy(plus.r, inv_mass);

  std::vector<double> q_prop = state.position;
  std::vector<double> grad_prop = state.gradient;
  double logp_prop = state.logp;
  double tree_log_weight = 0.0;  // weight of the initial point, exp(h0 - h0)

  TransStats stats;
  NutsResult result;

  for (int depth = 0; depth < max_tree_depth; ++depth) {
    const double dir = rng.uniform() < 0.5 ? -1.0 : 1.0;
    Phase& edge = dir > 0 ? plus : minus;
    Subtree sub;
    const bool valid = build_tree(depth, edge, dir * step, h0, target, inv_mass,
                                  max_energy_error, rng, stats, sub);
    if (!valid) break;

    // Biased progressive sampling toward the new subtree.
    if (sub.log_sum_weight > tree_log_weight ||
        rng.uniform() < std::exp(sub.log_sum_weight - tree_log_weight)) {
      q_prop = std::move(sub.q_propose);
      grad_prop = std::move(sub.grad_propose);
      logp_prop = sub.logp_propose;
    }
    tree_log_weight = log_sum_exp(tree_log_weight, sub.log_sum_weight);
    result.depth = depth + 1;

    if (!no_u_turn(minus.q, minus.r, plus.q, plus.r, inv_mass)) break;
  }

  state.position = std::move(q_prop);
  state.gradient = std::move(grad_prop);
  state.logp = logp_prop;
  result.accept_stat =
      stats.n_leapfrog > 0 ? stats.sum_metro / static_cast<double>(stats.n_leapfrog) : 0.0;
  result.divergent = stats.divergent;
  result.n_leapfrog = stats.n_leapfrog;
  return result;
}

DualAveraging::DualAveraging(double target_accept, double init_step)
    : target_(target_accept),
      mu_(std::log(10.0 * init_step)),
      log_step_(std::log(init_step)) {}

void DualAveraging::update(double accept_stat) {
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;
  ++iter_;
  const double m = static_cast<double>(iter_);
  const double eta = 1.0 / (m + kT0);
  h_avg_ = (1.0 - eta) * h_avg_ + eta * (target_ - accept_stat);
  log_step_ = mu_ - std::sqrt(m) / kGamma * h_avg_;
  const double w = std::pow(m, -kKappa);
  log_step_avg_ = w * log_step_ + (1.0 - w) * log_step_avg_;
}

void DualAveraging::restart(double init_step) {
  mu_ = std::log(10.0 * init_step);
  log_step_ = std::log(init_step);
  log_step_avg_ = 0.0;
  h_avg_ = 0.0;
  iter_ = 0;
}

WarmupSchedule WarmupSchedule::windowed(int warmup, int init_buffer,
                                        int term_buffer, int base_window) {
  if (warmup < init_buffer + base_window + term_buffer)
    fail("config", "warmup of " + std::to_string(warmup) +
                       " is too short for the adaptation window schedule "
                       "(needs at least " +
                       std::to_string(init_buffer + base_window + term_buffer) + ")");
  WarmupSchedule s;
  s.kind = Kind::windowed;
  s.warmup = warmup;
  s.init_buffer = init_buffer;
  s.term_buffer = term_buffer;
  int start = init_buffer;
  int width = base_window;
  const int slow_end = warmup - term_buffer;
  while (start < slow_end) {
    int end = start + width;
    // Extend the last window to the end of the slow phase.
    if (end > slow_end || slow_end - end < base_window) end = slow_end;
    s.window_ends.push_back(end);
    start = end;
    width *= 2;
  }
  return s;
}

WarmupSchedule WarmupSchedule::step_only(int warmup) {
  WarmupSchedule s;
  s.kind = Kind::step_only;
  s.warmup = warmup;
  return s;
}

WarmupSchedule WarmupSchedule::none() { return WarmupSchedule{}; }

WarmupSchedule WarmupSchedule::automatic(int warmup) {
  if (warmup == 0) return none();
  if (warmup < 150) return step_only(warmup);
  return windowed(warmup);
}

bool WarmupSchedule::in_slow_window(int warmup_iter) const {
  if (kind != Kind::windowed) return false;
  return warmup_iter >= init_buffer && warmup_iter < warmup - term_buffer;
}

bool WarmupSchedule::is_window_end(int warmup_iter) const {
  if (kind != Kind::windowed) return false;
  for (int e : window_ends)
    if (warmup_iter + 1 == e) return true;
  return false;
}

std::vector<double> regularized_variance(
    const std::vector<std::vector<double>>& draws) {
  if (draws.empty()) fail("config", "no draws to estimate a metric from");
  const std::size_t dim = draws.front().size();
  const double n = static_cast<double>(draws.size());
  std::vector<double> mean(dim, 0.0), m2(dim, 0.0);
  double count = 0.0;
  for (const auto& d : draws) {
    count += 1.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double delta = d[i] - mean[i];
      mean[i] += delta / count;
      m2[i] += delta * (d[i] - mean[i]);
    }
  }
  std::vector<double> var(dim, 1.0);
  if (draws.size() > 1) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double sample = m2[i] / (n - 1.0);
      var[i] = (n / (n + 5.0)) * sample + 1e-3 * (5.0 / (n + 5.0));
    }
  }
  return var;
}

namespace {

/// Step-size search: double or halve until the one-step acceptance
/// probability crosses one half.
double find_reasonable_step(const Phase& start, std::span<const double> inv_mass,
                            const LogProbFn& target, Rng& rng, double init) {
  double step = init > 0.0 ? init : 1.0;
  const std::size_t dim = start.q.size();

  Phase probe = start;
  probe.r.resize(dim);
  for (std::size_t i = 0; i < dim; ++i)
    probe.r[i] = rng.normal() / std::sqrt(inv_mass[i]);
  const double h0 = -probe.logp + kinetic_energy(probe.r, inv_mass);

  auto ratio_for = [&](double eps) {
    Phase z = probe;
    leapfrog_inplace(z, eps, target, inv_mass);
    if (!std::isfinite(z.logp) || !all_finite(z.r)) return 0.0;
    const double h = -z.logp + kinetic_energy(z.r, inv_mass);
    if (!std::isfinite(h)) return 0.0;
    return std::exp(h0 - h);
  };

  double ratio = ratio_for(step);
  const double dir = ratio > 0.5 ? 1.0 : -1.0;
  for (int it = 0; it < 100; ++it) {
    if (dir > 0 ? ratio <= 0.5 : ratio >= 0.5) break;
    step *= dir > 0 ? 2.0 : 0.5;
    if (step > 1e7 || step < 1e-10) break;
    ratio = ratio_for(step);
  }
  return std::clamp(step, 1e-10, 1e7);
}

struct ChainOutput {
  std::vector<double> draws;  // iterations x params, constrained
  long divergences = 0;
  double step_size = 0.0;
  std::vector<double> inv_mass;
  double accept_mean = 0.0;
};

void run_single_chain(const LogProbFn& target, std::size_t dim,
                      const ChainConfig& cfg, std::span<const double> init,
                      int chain_index, const TransformFn& transform,
                      ChainOutput& out) {
  Rng rng = Rng::stream(cfg.seed, {0x5eedULL, static_cast<std::uint64_t>(chain_index)});

  PhasePoint state;
  state.position.assign(init.begin(), init.end());
  state.gradient.resize(dim);
  state.logp = safe_eval(target, state.position, state.gradient);
  for (int attempt = 0; !std::isfinite(state.logp); ++attempt) {
    if (attempt >= 100)
      fail("numeric", "chain " + std::to_string(chain_index) +
                          ": initial log posterior still non-finite after 100 "
                          "re-jitter attempts");
    for (std::size_t i = 0; i < dim; ++i)
      state.position[i] = init[i] + rng.uniform(-0.5, 0.5);
    state.logp = safe_eval(target, state.position, state.gradient);
  }

  std::vector<double> inv_mass(dim, 1.0);
  const WarmupSchedule schedule = WarmupSchedule::automatic(cfg.warmup);

  Phase start;
  start.q = state.position;
  start.grad = state.gradient;
  start.logp = state.logp;

  double step = cfg.init_step;
  DualAveraging da(cfg.target_accept, 1.0);
  if (schedule.kind != WarmupSchedule::Kind::none) {
    step = find_reasonable_step(start, inv_mass, target, rng, cfg.init_step);
    da.restart(step);
  }

  std::vector<std::vector<double>> window_draws;
  for (int it = 0; it < cfg.warmup; ++it) {
    const NutsResult res = nuts_transition(state, da.current(), inv_mass, rng,
                                           target, cfg.max_tree_depth);
    da.update(res.accept_stat);
    if (schedule.in_slow_window(it)) window_draws.push_back(state.position);
    if (schedule.is_window_end(it)) {
      inv_mass = regularized_variance(window_draws);
      window_draws.clear();
      start.q = state.position;
      start.grad = state.gradient;
      start.logp = state.logp;
      const double fresh = find_reasonable_step(start, inv_mass, target, rng,
                                                da.adapted());
      da.restart(fresh);
    }
  }
  step = schedule.kind == WarmupSchedule::Kind::none ? cfg.init_step : da.adapted();

  const long iters = cfg.iters_per_chain();
  const long retained = cfg.retained_per_chain();
  out.draws.resize(static_cast<std::size_t>(retained) * dim);
  out.inv_mass = inv_mass;
  out.step_size = step;

  std::vector<double> constrained(dim);
  double accept_sum = 0.0;
  long kept = 0;
  for (long it = 0; it < iters; ++it) {
    const NutsResult res =
        nuts_transition(state, step, inv_mass, rng, target, cfg.max_tree_depth);
    accept_sum += res.accept_stat;
    if (res.divergent) ++out.divergences;
    if ((it + 1) % cfg.thin == 0) {
      if (transform)
        transform(state.position, constrained);
      else
        std::copy(state.position.begin(), state.position.end(), constrained.begin());
      std::copy(constrained.begin(), constrained.end(),
                out.draws.begin() + static_cast<std::ptrdiff_t>(kept * static_cast<long>(dim)));
      ++kept;
    }
  }
  out.accept_mean = iters > 0 ? accept_sum / static_cast<double>(iters) : 0.0;
}

}  // namespace

PosteriorDraws run_chains(const LogProbFn& target, std::size_t dim,
                          const ChainConfig& config,
                          const std::vector<std::vector<double>>& inits,
                          std::vector<std::string> names,
                          const TransformFn& transform) {
  config.validate();
  if (inits.size() != static_cast<std::size_t>(config.chains))
    fail("config", "one initial state per chain required");
  for (const auto& init : inits)
    if (init.size() != dim) fail("dimension", "initial state length mismatch");
  if (names.empty()) {
    names.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) names[i] = "theta_" + std::to_string(i + 1);
  }
  if (names.size() != dim) fail("dimension", "parameter name count mismatch");

  std::vector<ChainOutput> outputs(static_cast<std::size_t>(config.chains));
  std::exception_ptr first_error;
  std::mutex error_mutex;

  int thread_count = config.threads > 0
                         ? config.threads
                         : static_cast<int>(std::thread::hardware_concurrency());
  thread_count = std::max(1, std::min(thread_count, config.chains));

  auto work = [&](int chain) {
    try {
      run_single_chain(target, dim, config, inits[static_cast<std::size_t>(chain)],
                       chain, transform, outputs[static_cast<std::size_t>(chain)]);
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };

  if (thread_count == 1) {
    for (int c = 0; c < config.chains; ++c) work(c);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(thread_count));
    for (int t = 0; t < thread_count; ++t) {
      pool.emplace_back([&] {
        for (int c = next.fetch_add(1); c < config.chains; c = next.fetch_add(1))
          work(c);
      });
    }
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  PosteriorDraws draws;
  draws.names = std::move(names);
  draws.chains = config.chains;
  draws.iterations = config.retained_per_chain();
  draws.values.reserve(static_cast<std::size_t>(config.chains) *
                       static_cast<std::size_t>(draws.iterations) * dim);
  for (const auto& out : outputs)
    draws.values.insert(draws.values.end(), out.draws.begin(), out.draws.end());
  for (const auto& out : outputs) {
    draws.divergence_count.push_back(out.divergences);
    draws.step_size.push_back(out.step_size);
    draws.inv_mass.push_back(out.inv_mass);
    draws.accept_mean.push_back(out.accept_mean);
  }
  return draws;
}

}  // namespace varmod
