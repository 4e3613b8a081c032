#include <doctest.h>

#include <cmath>
#include <vector>

#include "varmod/baseline.hpp"
#include "varmod/errors.hpp"
#include "varmod/rng.hpp"

using namespace varmod;

TEST_CASE("isd basics") {
  CHECK(isd(std::vector{1.0, 1.0, 1.0}) == 0.0);
  CHECK(isd(std::vector{0.0, 2.0}) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(isd(std::vector{1.0}), Error);
}

TEST_CASE("isd affine behavior") {
  Rng rng(41);
  std::vector<double> x(50);
  for (double& v : x) v = rng.normal(2.0, 3.0);
  const double base = isd(x);
  std::vector<double> mapped = x;
  for (double& v : mapped) v = 5.0 - 2.5 * v;
  CHECK(isd(mapped) == doctest::Approx(2.5 * base).epsilon(1e-12));
  std::vector<double> shifted = x;
  for (double& v : shifted) v += 11.0;
  CHECK(isd(shifted) == doctest::Approx(base).epsilon(1e-10));
}

TEST_CASE("detrended isd removes a perfect linear trend") {
  const std::vector<double> series{1.0, 2.0, 3.0};
  const std::vector<double> time{1.0, 2.0, 3.0};
  CHECK(isd_detrended(series, time, 1) == doctest::Approx(0.0).epsilon(1e-10));
  // Without covariates it reduces to the raw ISD.
  CHECK(isd_detrended(series, {}, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rmssd on regular series") {
  CHECK(rmssd(std::vector{1.0, 2.0, 3.0}) == doctest::Approx(1.0));
  // Any monotone arithmetic sequence returns the common difference.
  CHECK(rmssd(std::vector{5.0, 3.5, 2.0, 0.5}) == doctest::Approx(1.5));
}

TEST_CASE("rmssd ignores trend while isd does not") {
  const std::vector<double> series{0.0, 1.0, 2.0, 3.0};
  CHECK(rmssd(series) == doctest::Approx(1.0));
  CHECK(isd(series) == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("a middle-day gap voids both successive pairs") {
  const std::vector<double> values{1.0, 3.0};
  const std::vector<long> times{1, 3};  // day 2 missing
  CHECK_THROWS_AS(rmssd(values, times), Error);

  const std::vector<double> longer{1.0, 3.0, 4.0};
  const std::vector<long> times2{1, 3, 4};
  CHECK(rmssd(longer, times2) == doctest::Approx(1.0));
}

TEST_CASE("ols reproduces an exact linear relationship") {
  std::vector<double> x;
  std::vector<double> y;
  for (int i = 0; i < 5; ++i) {
    x.push_back(1.0);
    x.push_back(static_cast<double>(i));
    y.push_back(2.0 + 3.0 * i);
  }
  const OlsFit fit = ols_fit(x, 2, y);
  CHECK(fit.coefs[0] == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(fit.coefs[1] == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(fit.residual_sd == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(fit.df == 3);
}

TEST_CASE("ols matches the frozen pseudo-inverse oracle") {
  // Frozen by tests/oracles/ols_oracle.py.
  const std::vector<double> x{
      1.0, 0.5,  2.1,  1.0, 1.5,  -0.3, 1.0, -0.7, 1.2,  1.0, 2.2, 0.8,
      1.0, 0.1,  -1.5, 1.0, -1.2, 0.4,  1.0, 1.8,  2.6,  1.0, 0.9, -0.9,
      1.0, -0.4, 1.9,  1.0, 1.1,  0.2};
  const std::vector<double> y{3.9, 2.1, 4.4, 5.0, -0.8, 1.6, 7.2, 0.3, 4.9, 2.8};
  const OlsFit fit = ols_fit(x, 3, y, 0.95);

  CHECK(fit.coefs[0] == doctest::Approx(1.7408222362158159).epsilon(1e-12));
  CHECK(fit.coefs[1] == doctest::Approx(0.56603962156303411).epsilon(1e-12));
  CHECK(fit.coefs[2] == doctest::Approx(1.6474996665809594).epsilon(1e-12));
  CHECK(fit.standard_errors[0] == doctest::Approx(0.3151279260697471).epsilon(1e-10));
  CHECK(fit.standard_errors[1] == doctest::Approx(0.23840995305143822).epsilon(1e-10));
  CHECK(fit.standard_errors[2] == doctest::Approx(0.20076961238765906).epsilon(1e-10));
  CHECK(fit.residual_sd == doctest::Approx(0.80225327800283774).epsilon(1e-12));
  CHECK(fit.ci_low[0] == doctest::Approx(0.99566309987715385).epsilon(1e-9));
  CHECK(fit.ci_high[0] == doctest::Approx(2.4859813725544777).epsilon(1e-9));
  CHECK(fit.ci_low[1] == doctest::Approx(0.0022896647565061601).scale(1.0).epsilon(1e-8));
  CHECK(fit.ci_high[2] == doctest::Approx(2.1222443610157011).epsilon(1e-9));
  CHECK(fit.df == 7);
}

TEST_CASE("ols rejects collinear designs") {
  std::vector<double> x;
  std::vector<double> y;
  for (int i = 0; i < 6; ++i) {
    x.push_back(1.0);
    x.push_back(2.0);  // proportional to the intercept
    y.push_back(static_cast<double>(i));
  }
  CHECK_THROWS_WITH_AS(ols_fit(x, 2, y), doctest::Contains("collinear"), Error);
}

TEST_CASE("ols solves an exactly determined square system") {
  const std::vector<double> x{2.0, 1.0, 1.0, 3.0, 1.0, -1.0};
  const std::vector<double> y{5.0, 10.0, 2.0};
  // 3 rows, 2 cols is not square; rows > cols required anyway. Use a
  // well-conditioned tall system with a known exact solution instead.
  const OlsFit fit = ols_fit(x, 2, y);
  // Solution of the normal equations computed by hand for this 3x2 system.
  CHECK(fit.coefs.size() == 2);
  const double b0 = fit.coefs[0], b1 = fit.coefs[1];
  // Verify via the normal equations X'X b = X'y to 1e-10.
  const double xtx00 = 2 * 2 + 1 * 1 + 1 * 1, xtx01 = 2 * 1 + 1 * 3 + 1 * -1;
  const double xtx11 = 1 * 1 + 3 * 3 + -1 * -1;
  const double xty0 = 2 * 5 + 1 * 10 + 1 * 2, xty1 = 1 * 5 + 3 * 10 + -1 * 2;
  CHECK(xtx00 * b0 + xtx01 * b1 == doctest::Approx(xty0).epsilon(1e-10));
  CHECK(xtx01 * b0 + xtx11 * b1 == doctest::Approx(xty1).epsilon(1e-10));
}

TEST_CASE("ols confidence intervals are calibrated") {
  Rng rng(42);
  const double true_b0 = 1.0, true_b1 = -0.5;
  int covered = 0;
  const int reps = 5000;
  for (int r = 0; r < reps; ++r) {
    std::vector<double> x, y;
    for (int i = 0; i < 12; ++i) {
      const double xv = rng.normal();
      x.push_back(1.0);
      x.push_back(xv);
      y.push_back(true_b0 + true_b1 * xv + rng.normal());
    }
    const OlsFit fit = ols_fit(x, 2, y, 0.95);
    if (fit.ci_low[1] <= true_b1 && true_b1 <= fit.ci_high[1]) ++covered;
  }
  const double coverage = static_cast<double>(covered) / reps;
  CHECK(coverage > 0.93);
  CHECK(coverage < 0.97);
}

TEST_CASE("isd model on null effects is consistent") {
  Rng rng(43);
  RepeatedData repeated;
  BetweenData between;
  const int n = 5000, k = 5;
  for (int j = 0; j < n; ++j) {
    const double mu = rng.normal();
    const double sigma = rng.gamma(4.0, 1.0);
    for (int i = 0; i < k; ++i) {
      repeated.subject.push_back(j);
      repeated.value.push_back(rng.normal(mu, sigma));
    }
    between.outcome.push_back(rng.normal());  // independent of everything
  }
  const OlsFit fit = isd_model(repeated, between);
  CHECK(std::abs(fit.coefs[1]) < 0.05);  // ISD coefficient
  CHECK(std::abs(fit.coefs[2]) < 0.05);  // mean coefficient
}

TEST_CASE("isd model lists subjects with too few observations") {
  RepeatedData repeated;
  repeated.subject = {0, 0, 1, 2, 2};
  repeated.value = {1.0, 2.0, 3.0, 4.0, 5.0};
  repeated.subject_labels = {"a", "b", "c"};
  BetweenData between;
  between.outcome = {1.0, 2.0, 3.0};
  CHECK_THROWS_WITH_AS(isd_model(repeated, between), doctest::Contains("b"), Error);
}
