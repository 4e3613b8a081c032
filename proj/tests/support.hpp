#ifndef VARMOD_TESTS_SUPPORT_HPP
#define VARMOD_TESTS_SUPPORT_HPP

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "varmod/data.hpp"
#include "varmod/model.hpp"
#include "varmod/rng.hpp"

namespace testsupport {

/// The pinned 3-subject dataset behind the frozen oracle values
/// (tests/oracles/logpost_oracle.py regenerates them).
inline varmod::RepeatedData fixture_repeated() {
  varmod::RepeatedData r;
  r.subject = {0, 0, 1, 1, 1, 2, 2};
  r.value = {4.2, 5.1, 3.0, 2.4, 3.9, 6.8, 7.4};
  r.covariates = {-0.5, 0.5, -1.0, 0.0, 1.0, -0.5, 0.5};
  r.n_covariates = 1;
  return r;
}

inline varmod::BetweenData fixture_between(bool with_mediator) {
  varmod::BetweenData b;
  b.outcome = {10.0, 8.5, 12.3};
  if (with_mediator) b.mediator = std::vector<double>{2.0, 1.0, 3.5};
  b.covariates = {1.0, 2.0, 1.0};
  b.n_covariates = 1;
  return b;
}

inline varmod::ParameterState fixture_state(bool mediation) {
  varmod::ParameterState st;
  st.mu_mu = 4.5;
  st.sigma_mu = 1.2;
  st.gamma_shape = 2.5;
  st.gamma_rate = 1.8;
  st.mu_j = {4.6, 3.1, 7.0};
  st.sigma_j = {0.8, 1.1, 0.6};
  st.v_covariate_coefs = {0.45};
  st.y_coefs = {1.5, -0.3};
  st.y_alpha = {2.0, 0.7};
  st.sigma_y = 1.3;
  if (mediation) {
    st.m_coefs = {0.4, 0.2};
    st.m_alpha = {1.1, -0.25};
    st.sigma_m = 0.9;
    st.y_on_m = 0.6;
  }
  return st;
}

inline varmod::VariabilityModel fixture_model(bool mediation) {
  varmod::Design design{mediation ? varmod::DesignKind::VtoMtoY
                                  : varmod::DesignKind::VtoY,
                        true};
  return varmod::VariabilityModel(fixture_repeated(), fixture_between(mediation),
                                  design);
}

/// Central finite differences of the log posterior; worst relative error
/// against the analytic gradient, with |g| floored at one in the denominator.
inline double max_gradient_error(const varmod::VariabilityModel& model,
                                 std::span<const double> z, double h = 1e-5) {
  std::vector<double> grad(z.size());
  model.log_posterior_grad(z, grad);
  std::vector<double> zz(z.begin(), z.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double keep = zz[i];
    zz[i] = keep + h;
    const double up = model.log_posterior(zz);
    zz[i] = keep - h;
    const double down = model.log_posterior(zz);
    zz[i] = keep;
    const double fd = (up - down) / (2.0 * h);
    const double err = std::abs(fd - grad[i]) / std::max(1.0, std::abs(grad[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

/// Random unconstrained state in a moderate box around the pinned state.
inline std::vector<double> random_state(const varmod::VariabilityModel& model,
                                        varmod::Rng& rng, double spread = 0.8) {
  std::vector<double> z =
      model.layout().unconstrain(fixture_state(model.design().mediation()));
  for (double& v : z) v += rng.uniform(-spread, spread);
  return z;
}

/// Synthetic sleep-diary-like dataset: 140 subjects with 1-14 daily values
/// of an hours-scale variable, a sex covariate, a quality-score mediator,
/// and a symptom-score outcome. Magnitudes sit in the range of the kind of
/// adolescent actigraphy study the model targets; the planted coefficient
/// of the latent SD in the mediator equation is 2.06.
struct SleepFixture {
  varmod::RepeatedData repeated;
  std::vector<double> ssq;   // mediator / single-stage outcome
  std::vector<double> cesd;  // mediation outcome
  std::vector<double> sex;   // 1 = male, 2 = female

  static constexpr double kMuMu = 9.04;
  static constexpr double kSigmaMu = 0.70;
  static constexpr double kShape = 5.0;
  static constexpr double kRate = 5.0 / 1.4;  // latent SDs average 1.4 hours
  static constexpr double kMIntercept = -4.21;
  static constexpr double kMSex = 0.86;
  static constexpr double kMAlpha1 = 2.06;  // the planted latent-SD effect
  static constexpr double kMAlpha2 = 1.13;
  static constexpr double kMResid = 2.0;
  static constexpr double kYIntercept = 13.46;
  static constexpr double kYSex = 2.97;
  static constexpr double kYOnM = 1.42;
  static constexpr double kYAlpha1 = -5.00;
  static constexpr double kYAlpha2 = -1.76;
  static constexpr double kYResid = 7.14;
};

inline SleepFixture make_sleep_fixture(std::uint64_t seed, int n_subjects = 140) {
  varmod::Rng rng = varmod::Rng::stream(seed, {0x51ee9});
  SleepFixture f;
  for (int j = 0; j < n_subjects; ++j) {
    // Day counts concentrate at the 14-day maximum with a thin tail down to
    // a single day; the first two subjects pin the extremes.
    int days;
    if (j == 0) {
      days = 1;
    } else if (j == 1) {
      days = 14;
    } else {
      const double u = rng.uniform();
      if (u < 0.72) {
        days = 14;
      } else if (u < 0.92) {
        days = 13;
      } else {
        days = 1 + static_cast<int>(rng.uniform() * 12.0);
      }
    }
    const double mu = rng.normal(SleepFixture::kMuMu, SleepFixture::kSigmaMu);
    const double sigma = rng.gamma(SleepFixture::kShape, SleepFixture::kRate);
    for (int d = 0; d < days; ++d) {
      f.repeated.subject.push_back(j);
      f.repeated.value.push_back(rng.normal(mu, sigma));
    }
    const double sex = rng.uniform() < 0.5 ? 1.0 : 2.0;
    const double ssq = SleepFixture::kMIntercept + SleepFixture::kMSex * sex +
                       SleepFixture::kMAlpha1 * sigma + SleepFixture::kMAlpha2 * mu +
                       rng.normal(0.0, SleepFixture::kMResid);
    const double cesd = SleepFixture::kYIntercept + SleepFixture::kYSex * sex +
                        SleepFixture::kYOnM * ssq + SleepFixture::kYAlpha1 * sigma +
                        SleepFixture::kYAlpha2 * mu +
                        rng.normal(0.0, SleepFixture::kYResid);
    f.sex.push_back(sex);
    f.ssq.push_back(ssq);
    f.cesd.push_back(cesd);
    f.repeated.subject_labels.push_back("s" + std::to_string(j + 1));
  }
  return f;
}

}  // namespace testsupport

#endif
