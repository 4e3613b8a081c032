#include "varmod/baseline.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <string>

#include "varmod/errors.hpp"

namespace varmod {

double isd(std::span<const double> series) {
  if (series.size() < 2)
    fail("data", "undefined ISD: series has fewer than two observations");
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(series.size());
  double ss = 0.0;
  for (double v : series) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(series.size() - 1));
}

double isd_detrended(std::span<const double> series,
                     std::span<const double> covariates,
                     std::size_t n_covariates) {
  if (series.size() < 2)
    fail("data", "undefined ISD: series has fewer than two observations");
  if (n_covariates == 0) return isd(series);
  if (covariates.size() != series.size() * n_covariates)
    fail("dimension", "covariate matrix shape mismatch");

  const Eigen::Index n = static_cast<Eigen::Index>(series.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(n_covariates) + 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (std::size_t c = 0; c < n_covariates; ++c)
      x(i, static_cast<Eigen::Index>(c) + 1) =
          covariates[static_cast<std::size_t>(i) * n_covariates + c];
    y(i) = series[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
  const Eigen::VectorXd resid = y - x * beta;
  double ss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) ss += resid(i) * resid(i);
  return std::sqrt(ss / static_cast<double>(n - 1));
}

double rmssd(std::span<const double> series) {
  if (series.size() < 2)
    fail("data", "RMSSD needs at least two observations");
  double ss = 0.0;
  for (std::size_t i = 1; i < series.size(); ++i) {
    const double d = series[i] - series[i - 1];
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(series.size() - 1));
}

double rmssd(std::span<const double> series, std::span<const long> times) {
  if (series.size() != times.size())
    fail("dimension", "series and time index lengths differ");
  if (series.size() < 2)
    fail("data", "RMSSD needs at least two observations");
  double ss = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (times[i] - times[i - 1] != 1) continue;  // a gap voids both pairs
    const double d = series[i] - series[i - 1];
    ss += d * d;
    ++pairs;
  }
  if (pairs == 0)
    fail("data", "RMSSD undefined: no successive pair survives the gaps");
  return std::sqrt(ss / static_cast<double>(pairs));
}

OlsFit ols_fit(std::span<const double> x, std::size_t cols,
               std::span<const double> y, double ci_level) {
  if (cols == 0) fail("dimension", "design matrix has no columns");
  if (x.size() != y.size() * cols)
    fail("dimension", "design matrix shape does not match the response length");
  if (y.size() <= cols)
    fail("data", "regression needs more rows than columns");
  if (!(ci_level > 0.0 && ci_level < 1.0))
    fail("config", "confidence level must lie in (0, 1)");

  const Eigen::Index n = static_cast<Eigen::Index>(y.size());
  const Eigen::Index k = static_cast<Eigen::Index>(cols);
  Eigen::MatrixXd design(n, k);
  Eigen::VectorXd response(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < k; ++c)
      design(i, c) = x[static_cast<std::size_t>(i) * cols + static_cast<std::size_t>(c)];
    response(i) = y[static_cast<std::size_t>(i)];
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < k) fail("data", "collinear design: rank-deficient regression matrix");

  const Eigen::VectorXd beta = qr.solve(response);
  const Eigen::VectorXd resid = response - design * beta;
  const long df = static_cast<long>(n - k);
  const double s2 = resid.squaredNorm() / static_cast<double>(df);

  // (X'X)^-1 from the factorization, for normal-theory standard errors.
  const Eigen::MatrixXd xtx_inv =
      (design.transpose() * design).ldlt().solve(Eigen::MatrixXd::Identity(k, k));

  const boost::math::students_t_distribution<double> t_dist(static_cast<double>(df));
  const double tq = boost::math::quantile(t_dist, 1.0 - (1.0 - ci_level) / 2.0);

  OlsFit fit;
  fit.df = df;
  fit.residual_sd = std::sqrt(s2);
  fit.coefs.resize(cols);
  fit.standard_errors.resize(cols);
  fit.ci_low.resize(cols);
  fit.ci_high.resize(cols);
  for (Eigen::Index c = 0; c < k; ++c) {
    const std::size_t idx = static_cast<std::size_t>(c);
    fit.coefs[idx] = beta(c);
    fit.standard_errors[idx] = std::sqrt(s2 * xtx_inv(c, c));
    fit.ci_low[idx] = beta(c) - tq * fit.standard_errors[idx];
    fit.ci_high[idx] = beta(c) + tq * fit.standard_errors[idx];
  }
  return fit;
}

OlsFit isd_model(const RepeatedData& repeated, const BetweenData& between,
                 double ci_level) {
  repeated.validate();
  between.validate(static_cast<std::size_t>(repeated.n_subjects()));

  const SubjectIndex index = SubjectIndex::build(repeated);
  const int n = repeated.n_subjects();

  std::string offenders;
  for (int j = 0; j < n; ++j) {
    if (index.count(j) < 2) {
      if (!offenders.empty()) offenders += ", ";
      offenders += repeated.subject_labels.empty()
                       ? std::to_string(j)
                       : repeated.subject_labels[static_cast<std::size_t>(j)];
    }
  }
  if (!offenders.empty())
    fail("data", "ISD undefined for subjects with fewer than two observations: " +
                     offenders);

  const std::size_t q = between.n_covariates;
  const std::size_t cols = 1 + q + 2;
  std::vector<double> x(static_cast<std::size_t>(n) * cols);
  for (int j = 0; j < n; ++j) {
    const std::size_t row = static_cast<std::size_t>(j);
    std::vector<double> series;
    series.reserve(index.count(j));
    for (std::size_t k = index.offsets[row]; k < index.offsets[row + 1]; ++k)
      series.push_back(repeated.value[index.order[k]]);
    double mean = 0.0;
    for (double v : series) mean += v;
    mean /= static_cast<double>(series.size());

    x[row * cols] = 1.0;
    for (std::size_t c = 0; c < q; ++c) x[row * cols + 1 + c] = between.covariate(row, c);
    x[row * cols + 1 + q] = isd(series);
    x[row * cols + 2 + q] = mean;
  }
  return ols_fit(x, cols, between.outcome, ci_level);
}

}  // namespace varmod
