#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "varmod/errors.hpp"
#include "varmod/rng.hpp"
#include "varmod/simulation.hpp"

using namespace varmod;

TEST_CASE("unstandardize closed form") {
  {
    const auto [a1, a2] = unstandardize(0.0, 0.0, 4.0, 1.0);
    CHECK(a1 == 0.0);
    CHECK(a2 == 0.0);
  }
  {
    const auto [a1, a2] = unstandardize(0.5, 0.3, 4.0, 1.0);
    CHECK(a1 == doctest::Approx(0.5 / std::sqrt(0.66) / 4.0).epsilon(1e-12));
    CHECK(a1 == doctest::Approx(0.15386).epsilon(1e-4));
    CHECK(a2 == doctest::Approx(0.36927).epsilon(1e-4));
  }
  CHECK_THROWS_WITH_AS(unstandardize(0.9, 0.5, 1.0, 1.0),
                       doctest::Contains("residual variance"), Error);
}

TEST_CASE("unstandardize round-trips through simulated data") {
  // Regressing the outcome on the true latent values must recover the
  // standardized coefficients (this isolates the transform from any
  // estimator bias). The full-size run lives in the acceptance suite.
  Rng rng(50);
  const double shape = 1.0, rate = 0.25;
  const double sd_sigma = std::sqrt(shape) / rate;
  const auto [u1, u2] = unstandardize(0.5, 0.3, sd_sigma, 1.0);
  const long n = 200000;
  double sxx[3][3] = {}, sxy[3] = {}, sy = 0.0, syy = 0.0;
  for (long i = 0; i < n; ++i) {
    const double mu = rng.normal();
    const double sg = rng.gamma(shape, rate);
    const double y = u1 * sg + u2 * mu + rng.normal();
    const double x[3] = {1.0, sg, mu};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) sxx[r][c] += x[r] * x[c];
      sxy[r] += x[r] * y;
    }
    sy += y;
    syy += y * y;
  }
  double a[3][4];
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) a[r][c] = sxx[r][c];
    a[r][3] = sxy[r];
  }
  for (int p = 0; p < 3; ++p)
    for (int r = p + 1; r < 3; ++r) {
      const double f = a[r][p] / a[p][p];
      for (int c = p; c < 4; ++c) a[r][c] -= f * a[p][c];
    }
  double beta[3];
  for (int r = 2; r >= 0; --r) {
    beta[r] = a[r][3];
    for (int c = r + 1; c < 3; ++c) beta[r] -= a[r][c] * beta[c];
    beta[r] /= a[r][r];
  }
  const double var_y =
      (syy - sy * sy / static_cast<double>(n)) / static_cast<double>(n - 1);
  CHECK(std::abs(beta[1] * sd_sigma / std::sqrt(var_y) - 0.5) < 0.02);
  CHECK(std::abs(beta[2] / std::sqrt(var_y) - 0.3) < 0.02);
}

TEST_CASE("generated sigma_j moments match the gamma population") {
  Rng rng(51);
  double sum = 0.0, sum2 = 0.0;
  const long count = 100000;
  for (long i = 0; i < count; ++i) {
    const double s = rng.gamma(1.0, 0.25);
    sum += s;
    sum2 += s * s;
  }
  const double mean = sum / static_cast<double>(count);
  const double sd = std::sqrt(sum2 / static_cast<double>(count) - mean * mean);
  CHECK(std::abs(mean - 4.0) < 0.05);
  CHECK(std::abs(sd - 4.0) < 0.1);

  // And the within-subject sampling layer: k values per subject around mu_j.
  SimCondition cond = SimCondition::paper_cell(true, 80, 5, 0.2, 1, 5);
  Rng rng2(52);
  const GeneratedData d = generate_dataset(cond, rng2);
  CHECK(d.repeated.n_obs() == 400);
  CHECK(d.repeated.n_subjects() == 80);
  CHECK(d.between.n() == 80);
  CHECK(d.truth.intercept == 0.0);
}

TEST_CASE("independence of Y and sigma_j under null effects") {
  // Null effects are outside the published grid, so emulate generation
  // step 4 with zero coefficients directly.
  Rng rng(53);
  const long n = 100000;
  double ss = 0.0, sy = 0.0, ssy = 0.0, ss2 = 0.0, sy2 = 0.0;
  for (long i = 0; i < n; ++i) {
    const double sg = rng.gamma(1.0, 0.25);
    const double y = rng.normal();
    ss += sg;
    sy += y;
    ssy += sg * y;
    ss2 += sg * sg;
    sy2 += y * y;
  }
  const double nn = static_cast<double>(n);
  const double corr = (ssy - ss * sy / nn) /
                      std::sqrt((ss2 - ss * ss / nn) * (sy2 - sy * sy / nn));
  CHECK(std::abs(corr) < 0.01);
}

TEST_CASE("generation is deterministic in the seed") {
  SimCondition cond = SimCondition::paper_cell(false, 80, 5, 0.5, 1, 6);
  Rng a(53), b(53);
  const GeneratedData da = generate_dataset(cond, a);
  const GeneratedData db = generate_dataset(cond, b);
  CHECK(da.repeated.value == db.repeated.value);
  CHECK(da.between.outcome == db.between.outcome);
  CHECK(da.truth.alpha1 == db.truth.alpha1);
}

TEST_CASE("relative bias arithmetic") {
  CHECK(relative_bias_pct(std::vector{2.0, 2.0, 2.0}, 2.0) == 0.0);
  CHECK(relative_bias_pct(std::vector{1.2 * 5.0}, 5.0) == doctest::Approx(20.0));
  CHECK_THROWS_WITH_AS(relative_bias_pct(std::vector{1.0}, 0.0),
                       doctest::Contains("plain bias"), Error);
}

TEST_CASE("coverage and power counting") {
  {
    const auto [cov, pow] =
        coverage_and_power(std::vector{1.0, 2.0}, std::vector{3.0, 4.0}, 2.5);
    CHECK(cov == 1.0);
    CHECK(pow == 1.0);
  }
  {
    const auto [cov, pow] =
        coverage_and_power(std::vector{-1.0, 2.0}, std::vector{1.0, 3.0}, 2.5);
    CHECK(cov == 0.5);
    CHECK(pow == 0.5);
  }
  CHECK_THROWS_AS(coverage_and_power(std::vector{2.0}, std::vector{1.0}, 0.0), Error);
}

TEST_CASE("interval calibration sanity") {
  Rng rng(54);
  std::vector<double> lows, highs;
  for (int r = 0; r < 5000; ++r) {
    const double est = rng.normal(1.0, 0.25);
    lows.push_back(est - 1.959963984540054 * 0.25);
    highs.push_back(est + 1.959963984540054 * 0.25);
  }
  const auto [cov, pow] = coverage_and_power(lows, highs, 1.0);
  CHECK(std::abs(cov - 0.95) < 0.01);
  (void)pow;
}

TEST_CASE("condition grid and ids") {
  const auto grid = SimCondition::paper_grid(10, 1);
  CHECK(grid.size() == 16);
  CHECK(grid.front().id() == "lo_N80_k5_a20");
  CHECK(grid.back().id() == "hi_N250_k14_a50");
  CHECK(SimCondition::from_id("hi_N250_k14_a50", 3, 9).thin == 2);
  CHECK(SimCondition::from_id("hi_N80_k5_a20", 3, 9).thin == 4);
  CHECK(SimCondition::from_id("lo_N80_k5_a50", 3, 9).thin == 10);
  // 250 retained per chain after thinning, for every cell.
  for (const auto& c : grid)
    CHECK(c.total_iterations / c.chains / c.thin == 250);
  CHECK_THROWS_WITH_AS(SimCondition::from_id("lo_N80_k9_a50", 3, 9),
                       doctest::Contains("unknown condition"), Error);

  SimCondition bad = grid.front();
  bad.gamma_shape = 2.0;
  bad.gamma_rate = 0.5;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("ISDM study: prefix determinism and exact re-aggregation") {
  SimCondition c10 = SimCondition::paper_cell(false, 80, 5, 0.2, 10, 42);
  SimCondition c4 = c10;
  c4.replications = 4;

  const StudyResult full = run_study({c10}, Estimator::ISDM, 2);
  const StudyResult prefix = run_study({c4}, Estimator::ISDM, 1);
  for (int r = 0; r < 4; ++r) {
    CHECK(full.records[static_cast<std::size_t>(r)].estimate ==
          prefix.records[static_cast<std::size_t>(r)].estimate);
    CHECK(full.records[static_cast<std::size_t>(r)].ci_low ==
          prefix.records[static_cast<std::size_t>(r)].ci_low);
  }

  // The ISDM arm converges always.
  CHECK(full.metrics[0].convergence_rate == 1.0);
  CHECK(full.metrics[0].n_used == 10);

  // Records round-trip through the CSV and re-aggregate to the same table.
  const auto dir = std::filesystem::temp_directory_path() / "varmod_sim_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "records.csv").string();
  write_records_csv(path, full);
  const auto records = read_records_csv(path, full.conditions);
  const auto metrics = aggregate_metrics(full.conditions, records, Estimator::ISDM);
  CHECK(metrics[0].alpha1_rel_bias_pct == full.metrics[0].alpha1_rel_bias_pct);
  CHECK(metrics[0].alpha1_coverage == full.metrics[0].alpha1_coverage);
  CHECK(metrics[0].alpha2_power == full.metrics[0].alpha2_power);
  CHECK(metrics[0].intercept_bias == full.metrics[0].intercept_bias);
  std::filesystem::remove_all(dir);
}

TEST_CASE("Bayesian study smoke replication") {
  SimCondition cond = SimCondition::paper_cell(true, 80, 5, 0.5, 1, 7);
  // Shortened schedule for a smoke check; the published schedule runs in
  // the acceptance suite.
  cond.warmup = 200;
  cond.thin = 1;
  cond.total_iterations = 800;
  const StudyResult res = run_study({cond}, Estimator::Bayesian, 2);
  REQUIRE(res.records.size() == 1);
  const RepRecord& rec = res.records[0];
  CHECK(!rec.sampler_error);
  CHECK(std::isfinite(rec.estimate[0]));
  CHECK(std::isfinite(rec.ess_focal));
  CHECK(rec.ci_low[0] < rec.ci_high[0]);
  CHECK(rec.truth[0] == doctest::Approx(0.15386).epsilon(1e-3));
}
