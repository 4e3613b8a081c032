#include "varmod/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "varmod/errors.hpp"

namespace varmod {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double chain_mean(const std::vector<double>& c) {
  double s = 0.0;
  for (double v : c) s += v;
  return s / static_cast<double>(c.size());
}

double chain_variance(const std::vector<double>& c, double mean) {
  double s = 0.0;
  for (double v : c) s += (v - mean) * (v - mean);
  return s / static_cast<double>(c.size() - 1);
}

/// W, B, and var_plus = ((n-1)/n) W + B/n for equal-length chains.
struct VarianceParts {
  double w = 0.0;
  double var_plus = 0.0;
  std::size_t m = 0;
  std::size_t n = 0;
};

VarianceParts variance_parts(const std::vector<std::vector<double>>& chains) {
  VarianceParts parts;
  parts.m = chains.size();
  parts.n = chains.front().size();
  std::vector<double> means(parts.m);
  for (std::size_t c = 0; c < parts.m; ++c) {
    if (chains[c].size() != parts.n)
      fail("dimension", "chains must have equal lengths");
    means[c] = chain_mean(chains[c]);
    parts.w += chain_variance(chains[c], means[c]);
  }
  parts.w /= static_cast<double>(parts.m);

  double b = 0.0;
  if (parts.m > 1) {
    const double grand = chain_mean(means);
    for (double mu : means) b += (mu - grand) * (mu - grand);
    b *= static_cast<double>(parts.n) / static_cast<double>(parts.m - 1);
  }
  const double n = static_cast<double>(parts.n);
  parts.var_plus = (n - 1.0) / n * parts.w + b / n;
  return parts;
}

std::vector<std::vector<double>> split_chains(
    const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> halves;
  halves.reserve(2 * chains.size());
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    halves.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    halves.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return halves;
}

/// Mean over chains of the mean squared lag-t difference.
double variogram(const std::vector<std::vector<double>>& chains, std::size_t t) {
  double total = 0.0;
  for (const auto& c : chains) {
    double s = 0.0;
    for (std::size_t i = t; i < c.size(); ++i) {
      const double d = c[i] - c[i - t];
      s += d * d;
    }
    total += s / static_cast<double>(c.size() - t);
  }
  return total / static_cast<double>(chains.size());
}

}  // namespace

ScalarDiag psrf(const std::vector<std::vector<double>>& chains, bool split) {
  if (chains.size() < 2 && !split) fail("dimension", "psrf needs at least two chains");
  if (chains.empty()) fail("dimension", "psrf needs at least one chain");
  for (const auto& c : chains)
    if (c.size() < 2) fail("dimension", "psrf needs at least two draws per chain");

  const auto& working = split ? split_chains(chains) : chains;
  const VarianceParts parts = variance_parts(working);
  if (parts.w <= 0.0) return {kInf, true};
  return {std::sqrt(parts.var_plus / parts.w), false};
}

ScalarDiag ess(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) fail("dimension", "ess needs at least one chain");
  for (const auto& c : chains)
    if (c.size() < 4) fail("dimension", "ess needs at least four draws per chain");

  const VarianceParts parts = variance_parts(chains);
  const double total = static_cast<double>(parts.m) * static_cast<double>(parts.n);
  if (parts.var_plus <= 0.0) return {total, true};

  // rho_t = 1 - V_t / (2 var_plus); sum pairs (rho_{2t}, rho_{2t+1}) while
  // the pair sum stays non-negative (rho_0 = 1 joins the first pair for the
  // test but never enters the sum).
  const std::size_t max_lag = std::min(parts.n - 1, static_cast<std::size_t>(10000));
  double rho_sum = 0.0;
  double rho_even = 1.0;  // rho_0
  std::size_t t = 1;
  while (t <= max_lag) {
    const double rho_odd = 1.0 - variogram(chains, t) / (2.0 * parts.var_plus);
    if (rho_even + rho_odd < 0.0) break;
    if (t > 1) rho_sum += rho_even;  // rho_0 never enters the sum
    rho_sum += rho_odd;
    if (t + 1 > max_lag) break;
    rho_even = 1.0 - variogram(chains, t + 1) / (2.0 * parts.var_plus);
    t += 2;
  }

  const double denom = 1.0 + 2.0 * rho_sum;
  double value = denom > 0.0 ? total / denom : total;
  value = std::min(value, total);
  if (!(value > 0.0)) value = total;
  return {value, false};
}

DiagnosticsReport convergence_report(const PosteriorDraws& draws,
                                     const std::string& focal) {
  const std::size_t focal_idx = draws.param_index(focal);

  DiagnosticsReport report;
  report.names = draws.names;
  report.rhat.resize(draws.n_params());
  report.ess.resize(draws.n_params());
  report.degenerate.resize(draws.n_params());
  report.focal = focal;

  double max_rhat = 0.0;
  double min_ess = kInf;
  for (std::size_t p = 0; p < draws.n_params(); ++p) {
    const auto chains = draws.parameter_chains(p);
    const ScalarDiag r = psrf(chains);
    const ScalarDiag e = ess(chains);
    report.rhat[p] = r.value;
    report.ess[p] = e.value;
    report.degenerate[p] = r.degenerate || e.degenerate;
    max_rhat = std::max(max_rhat, r.value);
    min_ess = std::min(min_ess, e.value);
  }
  report.max_rhat = max_rhat;
  report.min_ess = min_ess;
  report.converged = max_rhat < 1.1;
  report.focal_ess = report.ess[focal_idx];
  report.focal_ess_ok = report.focal_ess >= 200.0;
  return report;
}

}  // namespace varmod
