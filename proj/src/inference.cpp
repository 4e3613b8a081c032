#include "varmod/inference.hpp"

#include <algorithm>
#include <cmath>

#include "varmod/errors.hpp"

namespace varmod {

double empirical_pvalue(std::span<const double> draws) {
  if (draws.empty()) fail("dimension", "empirical p-value needs at least one draw");
  std::size_t at_or_below = 0;
  bool any_nonzero = false;
  for (double d : draws) {
    if (d <= 0.0) ++at_or_below;
    if (d != 0.0) any_nonzero = true;
  }
  if (!any_nonzero) return 1.0;
  const double n = static_cast<double>(draws.size());
  const double below = static_cast<double>(at_or_below) / n;
  const double above = 1.0 - below;
  return std::min(1.0, 2.0 * std::min(below, above));
}

double quantile(std::span<const double> draws, double prob) {
  if (draws.empty()) fail("dimension", "quantile of an empty draw set");
  if (!(prob >= 0.0 && prob <= 1.0)) fail("config", "quantile level outside [0, 1]");
  std::vector<double> sorted(draws.begin(), draws.end());
  std::sort(sorted.begin(), sorted.end());
  const double h = prob * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - std::floor(h);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

ParameterSummary summarize(std::span<const double> draws, double ci_level,
                           std::string name) {
  if (draws.size() < 2) fail("dimension", "summary needs at least two draws");
  if (!(ci_level > 0.0 && ci_level < 1.0))
    fail("config", "credible level must lie in (0, 1)");

  ParameterSummary s;
  s.name = std::move(name);
  double sum = 0.0;
  for (double d : draws) sum += d;
  s.mean = sum / static_cast<double>(draws.size());
  double ss = 0.0;
  for (double d : draws) ss += (d - s.mean) * (d - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(draws.size() - 1));

  std::vector<double> sorted(draws.begin(), draws.end());
  std::sort(sorted.begin(), sorted.end());
  auto q = [&](double p) {
    const double h = p * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - std::floor(h)) * (sorted[hi] - sorted[lo]);
  };
  const double tail = (1.0 - ci_level) / 2.0;
  s.median = q(0.5);
  s.ci_low = q(tail);
  s.ci_high = q(1.0 - tail);

  const double raw_p = empirical_pvalue(draws);
  if (raw_p == 0.0) {
    s.p_value = 1.0 / static_cast<double>(draws.size());
    s.p_is_bound = true;
  } else {
    s.p_value = raw_p;
  }
  return s;
}

ParameterSummary indirect_effect(std::span<const double> a_draws,
                                 std::span<const double> b_draws,
                                 double ci_level, std::string name) {
  if (a_draws.size() != b_draws.size())
    fail("dimension", "indirect effect requires jointly indexed draws of equal length");
  std::vector<double> product(a_draws.size());
  for (std::size_t i = 0; i < product.size(); ++i)
    product[i] = a_draws[i] * b_draws[i];
  return summarize(product, ci_level, std::move(name));
}

}  // namespace varmod
