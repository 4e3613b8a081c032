#ifndef VARMOD_INFERENCE_HPP
#define VARMOD_INFERENCE_HPP

#include <span>
#include <string>
#include <vector>

namespace varmod {

/// Posterior summary of a single parameter. `p_value` stores the empirical
/// two-tailed value; when the raw value is zero (no draw on one side of
/// zero) it is reported as the resolution bound 1/n with `p_is_bound` set.
struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double median = 0.0;
  double sd = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 1.0;
  bool p_is_bound = false;
};

/// Two-tailed empirical p-value: 2 * min(prop(theta <= 0), prop(theta > 0)),
/// capped at one. An all-zero draw vector reports 1 (a null effect carries
/// no evidence of sign).
double empirical_pvalue(std::span<const double> draws);

/// Type-7 (linear interpolation) empirical quantile of unsorted draws.
double quantile(std::span<const double> draws, double prob);

/// Moments, median, and the central credible interval at `ci_level`.
ParameterSummary summarize(std::span<const double> draws, double ci_level = 0.95,
                           std::string name = {});

/// Product-of-coefficients indirect effect from jointly indexed draws of the
/// two path coefficients.
ParameterSummary indirect_effect(std::span<const double> a_draws,
                                 std::span<const double> b_draws,
                                 double ci_level = 0.95, std::string name = {});

}  // namespace varmod

#endif
