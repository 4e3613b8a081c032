#ifndef VARMOD_MODEL_HPP
#define VARMOD_MODEL_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "varmod/data.hpp"
#include "varmod/rng.hpp"

namespace varmod {

/// Default weakly-informative priors: N(0, 1000) on means and regression
/// coefficients, half-Cauchy(0, 10) on every scale-type parameter.
struct PriorConfig {
  double coef_mean = 0.0;
  double coef_sd = 1000.0;
  double scale_prior_location = 0.0;
  double scale_prior_scale = 10.0;

  void validate() const;
};

/// Full parameter vector of the hierarchical model on the constrained scale.
/// Mediation blocks (m_coefs, m_alpha, sigma_m, y_on_m) are populated only
/// for the V -> M -> Y design.
struct ParameterState {
  double mu_mu = 0.0;
  double sigma_mu = 1.0;
  double gamma_shape = 1.0;
  double gamma_rate = 1.0;     // rate parameterization: mean = shape / rate
  std::vector<double> mu_j;
  std::vector<double> sigma_j;
  std::vector<double> v_covariate_coefs;
  std::vector<double> y_coefs;   // intercept + between covariates
  std::vector<double> y_alpha;   // coefficient on sigma_j [, on mu_j]
  double sigma_y = 1.0;
  std::vector<double> m_coefs;
  std::vector<double> m_alpha;
  double sigma_m = 1.0;
  double y_on_m = 0.0;
};

/// Flattened coordinate layout shared by the unconstrained vector, the
/// constrained draw vector, and the parameter name list. Every positive
/// parameter is stored as its natural logarithm in unconstrained coordinates.
class ParamLayout {
 public:
  ParamLayout(int n_subjects, std::size_t n_within_cov, std::size_t n_between_cov,
              Design design, std::vector<std::string> subject_labels = {});

  std::size_t size() const { return size_; }
  const std::vector<std::string>& names() const { return names_; }
  Design design() const { return design_; }
  int n_subjects() const { return n_subjects_; }

  std::vector<double> unconstrain(const ParameterState& s) const;
  ParameterState to_state(std::span<const double> z) const;

  /// Elementwise map from unconstrained to constrained coordinates.
  void constrain(std::span<const double> z, std::span<double> out) const;

  // Block offsets into the flattened vector.
  std::size_t mu_mu() const { return 0; }
  std::size_t v_coefs() const { return 1; }
  std::size_t sigma_mu() const { return p_ + 1; }
  std::size_t shape() const { return p_ + 2; }
  std::size_t rate() const { return p_ + 3; }
  std::size_t u(int j = 0) const { return p_ + 4 + static_cast<std::size_t>(j); }
  std::size_t s(int j = 0) const { return p_ + 4 + n_ + static_cast<std::size_t>(j); }
  std::size_t y_coefs() const { return p_ + 4 + 2 * n_; }
  std::size_t y_alpha() const { return y_coefs() + ny_; }
  std::size_t sigma_y() const { return y_alpha() + na_; }
  std::size_t m_coefs() const { return sigma_y() + 1; }
  std::size_t m_alpha() const { return m_coefs() + nm_; }
  std::size_t sigma_m() const { return m_alpha() + na_; }

  std::size_t n_y_coefs() const { return ny_; }   // intercept [+ mediator] + covariates
  std::size_t n_m_coefs() const { return nm_; }
  std::size_t n_alpha() const { return na_; }
  std::size_t n_v_coefs() const { return p_; }

  bool is_log_scale(std::size_t index) const;

 private:
  int n_subjects_;
  std::size_t n_, p_, q_, ny_, nm_, na_, size_;
  Design design_;
  std::vector<std::string> names_;
};

/// Additive pieces of the log posterior; useful for oracle checks and for
/// reasoning about which terms a parameter change touches.
struct LogPosteriorTerms {
  double obs_loglik = 0.0;     // V_ij | mu_j + x'gamma, sigma_j
  double mu_loglik = 0.0;      // mu_j | mu_mu, sigma_mu
  double sigma_loglik = 0.0;   // sigma_j | shape, rate
  double y_loglik = 0.0;       // second-stage outcome regression
  double m_loglik = 0.0;       // mediator regression (mediation design only)
  double log_prior = 0.0;
  double log_jacobian = 0.0;

  double total() const {
    return obs_loglik + mu_loglik + sigma_loglik + y_loglik + m_loglik +
           log_prior + log_jacobian;
  }
};

/// The hierarchical variability model: exact log posterior and gradient in
/// unconstrained coordinates. Immutable after construction; all evaluation
/// methods are const and safe to call concurrently.
class VariabilityModel {
 public:
  VariabilityModel(RepeatedData repeated, BetweenData between, Design design,
                   PriorConfig priors = {});

  const ParamLayout& layout() const { return layout_; }
  const RepeatedData& repeated() const { return repeated_; }
  const BetweenData& between() const { return between_; }
  const Design& design() const { return design_; }
  const PriorConfig& priors() const { return priors_; }

  double log_posterior(std::span<const double> z) const;

  /// Returns the log posterior and fills `grad` (same length/ordering as z).
  double log_posterior_grad(std::span<const double> z, std::span<double> grad) const;

  LogPosteriorTerms terms(std::span<const double> z) const;

  /// Start values from subject means, ISDs, and least-squares fits of the
  /// regression blocks, jittered uniformly by +-jitter in unconstrained space.
  ParameterState initialize(Rng& rng, double jitter = 0.5) const;

 private:
  double eval(std::span<const double> z, double* grad, LogPosteriorTerms* terms) const;

  RepeatedData repeated_;
  BetweenData between_;
  Design design_;
  PriorConfig priors_;
  ParamLayout layout_;
  SubjectIndex index_;
};

}  // namespace varmod

#endif
