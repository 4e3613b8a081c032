#include "varmod/model.hpp"

#include <Eigen/Dense>
#include <boost/math/special_functions/digamma.hpp>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "varmod/errors.hpp"

namespace varmod {

namespace {

constexpr double kLn2Pi = 1.8378770664093454836;  // ln(2*pi)

double log_normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * kLn2Pi - std::log(sd) - 0.5 * z * z;
}

double log_gamma_pdf(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) +
         (shape - 1.0) * std::log(x) - rate * x;
}

// Cauchy(loc, scale) truncated to the positive reals. loc = 0 reduces the
// normalizer to the familiar factor of two.
double log_half_cauchy_pdf(double x, double loc, double scale) {
  const double z = (x - loc) / scale;
  const double mass_above_zero = 1.0 - (0.5 + std::atan(-loc / scale) / std::numbers::pi);
  return -std::log(mass_above_zero) - std::log(std::numbers::pi * scale) -
         std::log1p(z * z);
}

double d_log_half_cauchy(double x, double loc, double scale) {
  const double d = x - loc;
  return -2.0 * d / (scale * scale + d * d);
}

}  // namespace

void PriorConfig::validate() const {
  if (!(coef_sd > 0.0)) fail("config", "coefficient prior sd must be positive");
  if (!(scale_prior_scale > 0.0)) fail("config", "scale prior scale must be positive");
}

ParamLayout::ParamLayout(int n_subjects, std::size_t n_within_cov,
                         std::size_t n_between_cov, Design design,
                         std::vector<std::string> subject_labels)
    : n_subjects_(n_subjects),
      n_(static_cast<std::size_t>(n_subjects)),
      p_(n_within_cov),
      q_(n_between_cov),
      design_(design) {
  if (n_subjects < 1) fail("dimension", "model needs at least one subject");
  const bool med = design.mediation();
  ny_ = 1 + (med ? 1 : 0) + q_;
  nm_ = med ? 1 + q_ : 0;
  na_ = design.use_latent_mean ? 2 : 1;
  size_ = (p_ + 4) + 2 * n_ + ny_ + na_ + 1;
  if (med) size_ += nm_ + na_ + 1;

  auto label = [&](int j) {
    return subject_labels.empty() ? std::to_string(j + 1)
                                  : subject_labels[static_cast<std::size_t>(j)];
  };
  names_.resize(size_);
  names_[mu_mu()] = "VB_1";
  for (std::size_t c = 0; c < p_; ++c)
    names_[v_coefs() + c] = "VB_" + std::to_string(c + 2);
  names_[sigma_mu()] = "sigma_U";
  names_[shape()] = "shape";
  names_[rate()] = "rate";
  for (int j = 0; j < n_subjects; ++j) {
    names_[u(j)] = "Est_U_" + label(j);
    names_[s(j)] = "Est_Sigma_" + label(j);
  }
  for (std::size_t c = 0; c < ny_; ++c)
    names_[y_coefs() + c] = "YB_" + std::to_string(c + 1);
  names_[y_alpha()] = "Yalpha_1";
  if (na_ == 2) names_[y_alpha() + 1] = "Yalpha_2";
  names_[sigma_y()] = "sigma_Y";
  if (med) {
    for (std::size_t c = 0; c < nm_; ++c)
      names_[m_coefs() + c] = "MB_" + std::to_string(c + 1);
    names_[m_alpha()] = "Malpha_1";
    if (na_ == 2) names_[m_alpha() + 1] = "Malpha_2";
    names_[sigma_m()] = "sigma_M";
  }
}

bool ParamLayout::is_log_scale(std::size_t index) const {
  if (index == sigma_mu() || index == shape() || index == rate()) return true;
  if (index >= s(0) && index < s(0) + n_) return true;
  if (index == sigma_y()) return true;
  if (design_.mediation() && index == sigma_m()) return true;
  return false;
}

std::vector<double> ParamLayout::unconstrain(const ParameterState& st) const {
  if (st.mu_j.size() != n_ || st.sigma_j.size() != n_)
    fail("dimension", "state subject-vector lengths do not match layout");
  if (st.v_covariate_coefs.size() != p_ || st.y_alpha.size() != na_)
    fail("dimension", "state block lengths do not match layout");
  const bool med = design_.mediation();
  if (st.y_coefs.size() != 1 + q_)
    fail("dimension", "y_coefs must hold intercept + between covariates");

  std::vector<double> z(size_);
  z[mu_mu()] = st.mu_mu;
  for (std::size_t c = 0; c < p_; ++c) z[v_coefs() + c] = st.v_covariate_coefs[c];
  z[sigma_mu()] = std::log(st.sigma_mu);
  z[shape()] = std::log(st.gamma_shape);
  z[rate()] = std::log(st.gamma_rate);
  for (int j = 0; j < n_subjects_; ++j) {
    z[u(j)] = st.mu_j[static_cast<std::size_t>(j)];
    z[s(j)] = std::log(st.sigma_j[static_cast<std::size_t>(j)]);
  }
  // Flattened y block order: intercept, [mediator coefficient], covariates.
  z[y_coefs()] = st.y_coefs[0];
  std::size_t pos = y_coefs() + 1;
  if (med) z[pos++] = st.y_on_m;
  for (std::size_t c = 0; c < q_; ++c) z[pos + c] = st.y_coefs[1 + c];
  for (std::size_t a = 0; a < na_; ++a) z[y_alpha() + a] = st.y_alpha[a];
  z[sigma_y()] = std::log(st.sigma_y);
  if (med) {
    if (st.m_coefs.size() != nm_ || st.m_alpha.size() != na_)
      fail("dimension", "mediation block lengths do not match layout");
    for (std::size_t c = 0; c < nm_; ++c) z[m_coefs() + c] = st.m_coefs[c];
    for (std::size_t a = 0; a < na_; ++a) z[m_alpha() + a] = st.m_alpha[a];
    z[sigma_m()] = std::log(st.sigma_m);
  }
  return z;
}

ParameterState ParamLayout::to_state(std::span<const double> z) const {
  if (z.size() != size_) fail("dimension", "coordinate vector length mismatch");
  const bool med = design_.mediation();
  ParameterState st;
  st.mu_mu = z[mu_mu()];
  st.v_covariate_coefs.assign(z.begin() + static_cast<std::ptrdiff_t>(v_coefs()),
                              z.begin() + static_cast<std::ptrdiff_t>(v_coefs() + p_));
  st.sigma_mu = std::exp(z[sigma_mu()]);
  st.gamma_shape = std::exp(z[shape()]);
  st.gamma_rate = std::exp(z[rate()]);
  st.mu_j.resize(n_);
  st.sigma_j.resize(n_);
  for (int j = 0; j < n_subjects_; ++j) {
    st.mu_j[static_cast<std::size_t>(j)] = z[u(j)];
    st.sigma_j[static_cast<std::size_t>(j)] = std::exp(z[s(j)]);
  }
  st.y_coefs.resize(1 + q_);
  st.y_coefs[0] = z[y_coefs()];
  std::size_t pos = y_coefs() + 1;
  if (med) st.y_on_m = z[pos++];
  for (std::size_t c = 0; c < q_; ++c) st.y_coefs[1 + c] = z[pos + c];
  st.y_alpha.assign(z.begin() + static_cast<std::ptrdiff_t>(y_alpha()),
                    z.begin() + static_cast<std::ptrdiff_t>(y_alpha() + na_));
  st.sigma_y = std::exp(z[sigma_y()]);
  if (med) {
    st.m_coefs.assign(z.begin() + static_cast<std::ptrdiff_t>(m_coefs()),
                      z.begin() + static_cast<std::ptrdiff_t>(m_coefs() + nm_));
    st.m_alpha.assign(z.begin() + static_cast<std::ptrdiff_t>(m_alpha()),
                      z.begin() + static_cast<std::ptrdiff_t>(m_alpha() + na_));
    st.sigma_m = std::exp(z[sigma_m()]);
  }
  return st;
}

void ParamLayout::constrain(std::span<const double> z, std::span<double> out) const {
  if (z.size() != size_ || out.size() != size_)
    fail("dimension", "coordinate vector length mismatch");
  for (std::size_t i = 0; i < size_; ++i)
    out[i] = is_log_scale(i) ? std::exp(z[i]) : z[i];
}

VariabilityModel::VariabilityModel(RepeatedData repeated, BetweenData between,
                                   Design design, PriorConfig priors)
    : repeated_(std::move(repeated)),
      between_(std::move(between)),
      design_(design),
      priors_(priors),
      layout_(1, 0, 0, design),
      index_() {
  priors_.validate();
  repeated_.validate();
  between_.validate(static_cast<std::size_t>(repeated_.n_subjects()));
  if (design_.mediation() && !between_.mediator)
    fail("config", "mediation design requires a mediator column");
  layout_ = ParamLayout(repeated_.n_subjects(), repeated_.n_covariates,
                        between_.n_covariates, design_, repeated_.subject_labels);
  index_ = SubjectIndex::build(repeated_);
}

double VariabilityModel::log_posterior(std::span<const double> z) const {
  return eval(z, nullptr, nullptr);
}

double VariabilityModel::log_posterior_grad(std::span<const double> z,
                                            std::span<double> grad) const {
  if (grad.size() != layout_.size())
    fail("dimension", "gradient length does not match parameter count");
  return eval(z, grad.data(), nullptr);
}

LogPosteriorTerms VariabilityModel::terms(std::span<const double> z) const {
  LogPosteriorTerms t;
  eval(z, nullptr, &t);
  return t;
}

double VariabilityModel::eval(std::span<const double> z, double* grad,
                              LogPosteriorTerms* terms) const {
  const ParamLayout& L = layout_;
  if (z.size() != L.size()) fail("dimension", "coordinate vector length mismatch");
  for (double v : z)
    if (!std::isfinite(v)) fail("numeric", "non-finite unconstrained coordinate");

  if (grad) std::fill(grad, grad + L.size(), 0.0);

  const int n = L.n_subjects();
  const std::size_t p = L.n_v_coefs();
  const std::size_t q = between_.n_covariates;
  const std::size_t na = L.n_alpha();
  const bool med = design_.mediation();
  const bool use_u = design_.use_latent_mean;

  const double mu_mu = z[L.mu_mu()];
  const double sigma_mu = std::exp(z[L.sigma_mu()]);
  const double shape = std::exp(z[L.shape()]);
  const double rate = std::exp(z[L.rate()]);
  const double sigma_y = std::exp(z[L.sigma_y()]);
  const double sigma_m = med ? std::exp(z[L.sigma_m()]) : 1.0;

  LogPosteriorTerms acc;

  // Observation likelihood: V_ij ~ N(mu_j + x'gamma, sigma_j).
  for (int j = 0; j < n; ++j) {
    const double uj = z[L.u(j)];
    const double sj = std::exp(z[L.s(j)]);
    const double inv_var = 1.0 / (sj * sj);
    double d_sj = 0.0;
    for (std::size_t k = index_.offsets[static_cast<std::size_t>(j)];
         k < index_.offsets[static_cast<std::size_t>(j) + 1]; ++k) {
      const std::size_t i = index_.order[k];
      double mean = uj;
      for (std::size_t c = 0; c < p; ++c)
        mean += z[L.v_coefs() + c] * repeated_.covariate(i, c);
      const double r = repeated_.value[i] - mean;
      acc.obs_loglik += -0.5 * kLn2Pi - z[L.s(j)] - 0.5 * r * r * inv_var;
      if (grad) {
        const double ri = r * inv_var;
        grad[L.u(j)] += ri;
        for (std::size_t c = 0; c < p; ++c)
          grad[L.v_coefs() + c] += ri * repeated_.covariate(i, c);
        d_sj += -1.0 / sj + r * r / (sj * sj * sj);
      }
    }
    if (grad) grad[L.s(j)] += d_sj * sj;  // chain rule through sigma_j = exp(z)
  }

  // Subject means: mu_j ~ N(mu_mu, sigma_mu).
  {
    const double inv_var = 1.0 / (sigma_mu * sigma_mu);
    double d_sigma_mu = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = z[L.u(j)] - mu_mu;
      acc.mu_loglik += log_normal_pdf(z[L.u(j)], mu_mu, sigma_mu);
      if (grad) {
        grad[L.u(j)] += -d * inv_var;
        grad[L.mu_mu()] += d * inv_var;
        d_sigma_mu += -1.0 / sigma_mu + d * d / (sigma_mu * sigma_mu * sigma_mu);
      }
    }
    if (grad) grad[L.sigma_mu()] += d_sigma_mu * sigma_mu;
  }

  // Subject scales: sigma_j ~ Gamma(shape, rate).
  {
    double d_shape = 0.0, d_rate = 0.0;
    const double digamma_shape = grad ? boost::math::digamma(shape) : 0.0;
    for (int j = 0; j < n; ++j) {
      const double sj = std::exp(z[L.s(j)]);
      acc.sigma_loglik += log_gamma_pdf(sj, shape, rate);
      if (grad) {
        grad[L.s(j)] += ((shape - 1.0) / sj - rate) * sj;
        d_shape += std::log(rate) - digamma_shape + z[L.s(j)];
        d_rate += shape / rate - sj;
      }
    }
    if (grad) {
      grad[L.shape()] += d_shape * shape;
      grad[L.rate()] += d_rate * rate;
    }
  }

  // Second-stage outcome regression.
  {
    const double inv_var = 1.0 / (sigma_y * sigma_y);
    double d_sigma_y = 0.0;
    for (int j = 0; j < n; ++j) {
      const std::size_t sj_idx = static_cast<std::size_t>(j);
      const double sj = std::exp(z[L.s(j)]);
      double eta = z[L.y_coefs()];
      std::size_t pos = L.y_coefs() + 1;
      if (med) eta += z[pos++] * (*between_.mediator)[sj_idx];
      for (std::size_t c = 0; c < q; ++c)
        eta += z[pos + c] * between_.covariate(sj_idx, c);
      eta += z[L.y_alpha()] * sj;
      if (use_u) eta += z[L.y_alpha() + 1] * z[L.u(j)];

      const double r = between_.outcome[sj_idx] - eta;
      acc.y_loglik += -0.5 * kLn2Pi - z[L.sigma_y()] - 0.5 * r * r * inv_var;
      if (grad) {
        const double ri = r * inv_var;
        grad[L.y_coefs()] += ri;
        std::size_t gpos = L.y_coefs() + 1;
        if (med) grad[gpos++] += ri * (*between_.mediator)[sj_idx];
        for (std::size_t c = 0; c < q; ++c)
          grad[gpos + c] += ri * between_.covariate(sj_idx, c);
        grad[L.y_alpha()] += ri * sj;
        grad[L.s(j)] += z[L.y_alpha()] * ri * sj;
        if (use_u) {
          grad[L.y_alpha() + 1] += ri * z[L.u(j)];
          grad[L.u(j)] += z[L.y_alpha() + 1] * ri;
        }
        d_sigma_y += -1.0 / sigma_y + r * r / (sigma_y * sigma_y * sigma_y);
      }
    }
    if (grad) grad[L.sigma_y()] += d_sigma_y * sigma_y;
  }

  // Mediator regression.
  if (med) {
    const double inv_var = 1.0 / (sigma_m * sigma_m);
    double d_sigma_m = 0.0;
    for (int j = 0; j < n; ++j) {
      const std::size_t sj_idx = static_cast<std::size_t>(j);
      const double sj = std::exp(z[L.s(j)]);
      double eta = z[L.m_coefs()];
      for (std::size_t c = 0; c < q; ++c)
        eta += z[L.m_coefs() + 1 + c] * between_.covariate(sj_idx, c);
      eta += z[L.m_alpha()] * sj;
      if (use_u) eta += z[L.m_alpha() + 1] * z[L.u(j)];

      const double r = (*between_.mediator)[sj_idx] - eta;
      acc.m_loglik += -0.5 * kLn2Pi - z[L.sigma_m()] - 0.5 * r * r * inv_var;
      if (grad) {
        const double ri = r * inv_var;
        grad[L.m_coefs()] += ri;
        for (std::size_t c = 0; c < q; ++c)
          grad[L.m_coefs() + 1 + c] += ri * between_.covariate(sj_idx, c);
        grad[L.m_alpha()] += ri * sj;
        grad[L.s(j)] += z[L.m_alpha()] * ri * sj;
        if (use_u) {
          grad[L.m_alpha() + 1] += ri * z[L.u(j)];
          grad[L.u(j)] += z[L.m_alpha() + 1] * ri;
        }
        d_sigma_m += -1.0 / sigma_m + r * r / (sigma_m * sigma_m * sigma_m);
      }
    }
    if (grad) grad[L.sigma_m()] += d_sigma_m * sigma_m;
  }

  // Priors: normal on every location/coefficient parameter, half-Cauchy on
  // every scale-type parameter, evaluated on the constrained value.
  {
    const double cm = priors_.coef_mean;
    const double inv_cv = 1.0 / (priors_.coef_sd * priors_.coef_sd);
    auto coef_prior = [&](std::size_t idx) {
      acc.log_prior += log_normal_pdf(z[idx], cm, priors_.coef_sd);
      if (grad) grad[idx] += -(z[idx] - cm) * inv_cv;
    };
    coef_prior(L.mu_mu());
    for (std::size_t c = 0; c < p; ++c) coef_prior(L.v_coefs() + c);
    for (std::size_t c = 0; c < L.n_y_coefs(); ++c) coef_prior(L.y_coefs() + c);
    for (std::size_t a = 0; a < na; ++a) coef_prior(L.y_alpha() + a);
    if (med) {
      for (std::size_t c = 0; c < L.n_m_coefs(); ++c) coef_prior(L.m_coefs() + c);
      for (std::size_t a = 0; a < na; ++a) coef_prior(L.m_alpha() + a);
    }

    const double loc = priors_.scale_prior_location;
    const double sc = priors_.scale_prior_scale;
    auto scale_prior = [&](std::size_t idx, double value) {
      acc.log_prior += log_half_cauchy_pdf(value, loc, sc);
      if (grad) grad[idx] += d_log_half_cauchy(value, loc, sc) * value;
    };
    scale_prior(L.sigma_mu(), sigma_mu);
    scale_prior(L.shape(), shape);
    scale_prior(L.rate(), rate);
    scale_prior(L.sigma_y(), sigma_y);
    if (med) scale_prior(L.sigma_m(), sigma_m);
  }

  // Log-Jacobian of the log transform: one z per positive parameter.
  {
    acc.log_jacobian += z[L.sigma_mu()] + z[L.shape()] + z[L.rate()] + z[L.sigma_y()];
    if (grad) {
      grad[L.sigma_mu()] += 1.0;
      grad[L.shape()] += 1.0;
      grad[L.rate()] += 1.0;
      grad[L.sigma_y()] += 1.0;
    }
    for (int j = 0; j < n; ++j) {
      acc.log_jacobian += z[L.s(j)];
      if (grad) grad[L.s(j)] += 1.0;
    }
    if (med) {
      acc.log_jacobian += z[L.sigma_m()];
      if (grad) grad[L.sigma_m()] += 1.0;
    }
  }

  if (terms) *terms = acc;
  const double total = acc.total();
  // Extreme states can overflow to NaN through exp(); report as -inf so the
  // sampler treats them as divergent rather than propagating NaN.
  if (std::isnan(total)) return -std::numeric_limits<double>::infinity();
  return total;
}

ParameterState VariabilityModel::initialize(Rng& rng, double jitter) const {
  const int n = repeated_.n_subjects();
  const std::size_t q = between_.n_covariates;
  const bool med = design_.mediation();
  const bool use_u = design_.use_latent_mean;

  // Per-subject sample moments; pooled within-subject SD backfills subjects
  // with fewer than two observations or no spread.
  std::vector<double> means(static_cast<std::size_t>(n));
  std::vector<double> sds(static_cast<std::size_t>(n), 0.0);
  double pooled_ss = 0.0;
  long pooled_df = 0;
  for (int j = 0; j < n; ++j) {
    const std::size_t lo = index_.offsets[static_cast<std::size_t>(j)];
    const std::size_t hi = index_.offsets[static_cast<std::size_t>(j) + 1];
    const std::size_t nj = hi - lo;
    double sum = 0.0;
    for (std::size_t k = lo; k < hi; ++k) sum += repeated_.value[index_.order[k]];
    means[static_cast<std::size_t>(j)] = sum / static_cast<double>(nj);
    if (nj >= 2) {
      double ss = 0.0;
      for (std::size_t k = lo; k < hi; ++k) {
        const double d =
            repeated_.value[index_.order[k]] - means[static_cast<std::size_t>(j)];
        ss += d * d;
      }
      sds[static_cast<std::size_t>(j)] = std::sqrt(ss / static_cast<double>(nj - 1));
      pooled_ss += ss;
      pooled_df += static_cast<long>(nj) - 1;
    }
  }
  const double pooled_sd =
      pooled_df > 0 ? std::sqrt(pooled_ss / static_cast<double>(pooled_df)) : 0.0;
  if (!(pooled_sd > 0.0))
    fail("data", "degenerate repeated data: no within-subject variation");
  for (int j = 0; j < n; ++j) {
    double& s = sds[static_cast<std::size_t>(j)];
    if (index_.count(j) < 2 || !(s > 0.0)) s = pooled_sd;
  }

  ParameterState st;
  st.mu_j = means;
  st.sigma_j = sds;

  double mean_mu = 0.0;
  for (double m : means) mean_mu += m;
  mean_mu /= static_cast<double>(n);
  double var_mu = 0.0;
  for (double m : means) var_mu += (m - mean_mu) * (m - mean_mu);
  var_mu = n > 1 ? var_mu / static_cast<double>(n - 1) : 1.0;
  st.mu_mu = mean_mu;
  st.sigma_mu = std::max(std::sqrt(var_mu), 1e-3 * pooled_sd);

  // Method-of-moments gamma fit to the initial sigma_j, with a variance
  // floor so near-constant initial SDs do not blow up the shape.
  {
    double ms = 0.0;
    for (double s : sds) ms += s;
    ms /= static_cast<double>(n);
    double vs = 0.0;
    for (double s : sds) vs += (s - ms) * (s - ms);
    vs = n > 1 ? vs / static_cast<double>(n - 1) : 0.0;
    vs = std::max(vs, 1e-2 * ms * ms);
    st.gamma_shape = std::clamp(ms * ms / vs, 1e-2, 1e3);
    st.gamma_rate = std::clamp(ms / vs, 1e-2, 1e3);
  }

  st.v_covariate_coefs.assign(repeated_.n_covariates, 0.0);

  // Regression blocks from ordinary least squares on the initial moments.
  auto least_squares = [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          double& resid_sd) {
    Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
    const Eigen::VectorXd resid = y - x * beta;
    const long df = x.rows() - x.cols();
    resid_sd = df > 0 ? std::sqrt(resid.squaredNorm() / static_cast<double>(df))
                      : std::sqrt(resid.squaredNorm() + 1e-2);
    return beta;
  };
  auto build_design = [&](bool with_mediator) {
    const std::size_t cols = 1 + (with_mediator ? 1 : 0) + q + 1 + (use_u ? 1 : 0);
    Eigen::MatrixXd x(n, cols);
    for (int j = 0; j < n; ++j) {
      const std::size_t sj = static_cast<std::size_t>(j);
      Eigen::Index c = 0;
      x(j, c++) = 1.0;
      if (with_mediator) x(j, c++) = (*between_.mediator)[sj];
      for (std::size_t a = 0; a < q; ++a) x(j, c++) = between_.covariate(sj, a);
      x(j, c++) = sds[sj];
      if (use_u) x(j, c++) = means[sj];
    }
    return x;
  };

  const std::size_t na = use_u ? 2 : 1;
  {
    Eigen::VectorXd y(n);
    for (int j = 0; j < n; ++j) y(j) = between_.outcome[static_cast<std::size_t>(j)];
    double resid_sd = 1.0;
    const Eigen::MatrixXd x = build_design(med);
    const Eigen::VectorXd beta = least_squares(x, y, resid_sd);
    Eigen::Index c = 0;
    st.y_coefs.assign(1 + q, 0.0);
    st.y_coefs[0] = beta(c++);
    if (med) st.y_on_m = beta(c++);
    for (std::size_t a = 0; a < q; ++a) st.y_coefs[1 + a] = beta(c++);
    st.y_alpha.assign(na, 0.0);
    st.y_alpha[0] = beta(c++);
    if (use_u) st.y_alpha[1] = beta(c++);
    st.sigma_y = std::max(resid_sd, 1e-6);
  }
  if (med) {
    Eigen::VectorXd m(n);
    for (int j = 0; j < n; ++j) m(j) = (*between_.mediator)[static_cast<std::size_t>(j)];
    double resid_sd = 1.0;
    const Eigen::MatrixXd x = build_design(false);
    const Eigen::VectorXd beta = least_squares(x, m, resid_sd);
    Eigen::Index c = 0;
    st.m_coefs.assign(1 + q, 0.0);
    st.m_coefs[0] = beta(c++);
    for (std::size_t a = 0; a < q; ++a) st.m_coefs[1 + a] = beta(c++);
    st.m_alpha.assign(na, 0.0);
    st.m_alpha[0] = beta(c++);
    if (use_u) st.m_alpha[1] = beta(c++);
    st.sigma_m = std::max(resid_sd, 1e-6);
  }

  if (jitter > 0.0) {
    std::vector<double> z = layout_.unconstrain(st);
    for (double& v : z) v += rng.uniform(-jitter, jitter);
    st = layout_.to_state(z);
  }
  return st;
}

}  // namespace varmod
