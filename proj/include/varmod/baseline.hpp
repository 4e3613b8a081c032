#ifndef VARMOD_BASELINE_HPP
#define VARMOD_BASELINE_HPP

#include <optional>
#include <span>
#include <vector>

#include "varmod/data.hpp"

namespace varmod {

/// Individual standard deviation: the n-1 sample SD of one subject's series.
double isd(std::span<const double> series);

/// ISD of the residuals from a per-subject least-squares fit on the given
/// covariates (detrended variability). `covariates` is row-major with one
/// row per observation; the intercept is implicit.
double isd_detrended(std::span<const double> series,
                     std::span<const double> covariates, std::size_t n_covariates);

/// Root mean square of successive differences over adjacent entries.
double rmssd(std::span<const double> series);

/// RMSSD with explicit integer time indices so gaps are detectable; only
/// pairs one time unit apart count, and a gap drops both adjacent pairs.
double rmssd(std::span<const double> series, std::span<const long> times);

struct OlsFit {
  std::vector<double> coefs;
  std::vector<double> standard_errors;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  double residual_sd = 0.0;
  long df = 0;
};

/// Ordinary least squares via QR with normal-theory (Student-t) intervals.
/// `x` is row-major (rows x cols) and must contain its own intercept column.
OlsFit ols_fit(std::span<const double> x, std::size_t cols,
               std::span<const double> y, double ci_level = 0.95);

/// The classical comparator: regress the outcome on
/// [intercept, between covariates, ISD_j, mean_j]. Every subject needs at
/// least two observations.
OlsFit isd_model(const RepeatedData& repeated, const BetweenData& between,
                 double ci_level = 0.95);

}  // namespace varmod

#endif
