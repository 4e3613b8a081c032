#include "varmod/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include "varmod/baseline.hpp"
#include "varmod/csv.hpp"
#include "varmod/diagnostics.hpp"
#include "varmod/errors.hpp"
#include "varmod/inference.hpp"
#include "varmod/model.hpp"
#include "varmod/sampler.hpp"

namespace varmod {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::string SimCondition::id() const {
  std::string s = high_variability() ? "hi" : "lo";
  s += "_N" + std::to_string(n_subjects);
  s += "_k" + std::to_string(k);
  s += "_a" + std::to_string(static_cast<int>(std::lround(alpha1_std * 100)));
  return s;
}

void SimCondition::validate() const {
  const bool hi = gamma_shape == 1.0 && gamma_rate == 0.25;
  const bool lo = gamma_shape == 4.0 && gamma_rate == 1.0;
  if (!hi && !lo)
    fail("config", "gamma parameters must be (1, .25) or (4, 1)");
  // Both admitted gammas have mean four; their SDs are four and two.
  const double mean = gamma_shape / gamma_rate;
  const double sd = std::sqrt(gamma_shape) / gamma_rate;
  if (std::abs(mean - 4.0) > 1e-12 || (std::abs(sd - 4.0) > 1e-12 && std::abs(sd - 2.0) > 1e-12))
    fail("config", "gamma moments violated: mean must be 4 with SD 4 or 2");
  if (k != 5 && k != 14) fail("config", "repeated-measure count must be 5 or 14");
  if (n_subjects != 80 && n_subjects != 250)
    fail("config", "sample size must be 80 or 250");
  if (alpha1_std != 0.2 && alpha1_std != 0.5)
    fail("config", "standardized alpha1 must be .2 or .5");
  if (alpha2_std != 0.3) fail("config", "standardized alpha2 is fixed at .3");
  if (replications < 1) fail("config", "replication count must be positive");
  if (alpha1_std * alpha1_std + alpha2_std * alpha2_std >= 1.0)
    fail("config", "standardized effects imply non-positive residual variance");
}

SimCondition SimCondition::paper_cell(bool high_variability, int n_subjects, int k,
                                      double alpha1_std, int replications,
                                      std::uint64_t seed) {
  SimCondition c;
  c.k = k;
  c.n_subjects = n_subjects;
  c.alpha1_std = alpha1_std;
  c.gamma_shape = high_variability ? 1.0 : 4.0;
  c.gamma_rate = high_variability ? 0.25 : 1.0;
  c.replications = replications;
  c.seed = seed;
  c.thin = high_variability ? (k == 5 ? 4 : 2) : 10;
  c.warmup = 500;
  c.total_iterations = 1000L * c.thin;  // 250 retained per chain after thinning
  c.validate();
  return c;
}

std::vector<SimCondition> SimCondition::paper_grid(int replications,
                                                   std::uint64_t seed) {
  std::vector<SimCondition> grid;
  for (double a1 : {0.2, 0.5})
    for (bool hi : {false, true})
      for (int n : {80, 250})
        for (int k : {5, 14})
          grid.push_back(paper_cell(hi, n, k, a1, replications, seed));
  return grid;
}

SimCondition SimCondition::from_id(const std::string& id, int replications,
                                   std::uint64_t seed) {
  for (const auto& cell : paper_grid(replications, seed))
    if (cell.id() == id) return cell;
  fail("config", "unknown condition id '" + id +
                     "' (expected e.g. lo_N80_k5_a20 or hi_N250_k14_a50)");
}

std::pair<double, double> unstandardize(double alpha1_std, double alpha2_std,
                                        double sd_sigma_j, double sd_mu_j) {
  const double r2 = alpha1_std * alpha1_std + alpha2_std * alpha2_std;
  if (r2 >= 1.0)
    fail("config", "standardized effects imply non-positive residual variance");
  if (!(sd_sigma_j > 0.0) || !(sd_mu_j > 0.0))
    fail("config", "predictor SDs must be positive");
  const double sd_y = 1.0 / std::sqrt(1.0 - r2);
  return {alpha1_std * sd_y / sd_sigma_j, alpha2_std * sd_y / sd_mu_j};
}

GeneratedData generate_dataset(const SimCondition& cond, Rng& rng) {
  cond.validate();
  const int n = cond.n_subjects;
  const double sd_sigma = std::sqrt(cond.gamma_shape) / cond.gamma_rate;
  const auto [a1, a2] = unstandardize(cond.alpha1_std, cond.alpha2_std, sd_sigma, 1.0);

  std::vector<double> mu(static_cast<std::size_t>(n));
  std::vector<double> sigma(static_cast<std::size_t>(n));
  for (auto& m : mu) m = rng.normal();
  for (auto& s : sigma) s = rng.gamma(cond.gamma_shape, cond.gamma_rate);

  GeneratedData out;
  out.repeated.subject.reserve(static_cast<std::size_t>(n) * cond.k);
  out.repeated.value.reserve(static_cast<std::size_t>(n) * cond.k);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < cond.k; ++i) {
      out.repeated.subject.push_back(j);
      out.repeated.value.push_back(
          rng.normal(mu[static_cast<std::size_t>(j)], sigma[static_cast<std::size_t>(j)]));
    }
  }
  out.between.outcome.resize(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    const std::size_t sj = static_cast<std::size_t>(j);
    out.between.outcome[sj] = rng.normal(a1 * sigma[sj] + a2 * mu[sj], 1.0);
  }
  out.truth = {a1, a2, 0.0};
  return out;
}

double relative_bias_pct(std::span<const double> estimates, double truth) {
  if (truth == 0.0)
    fail("config",
         "relative bias undefined at truth zero; report plain bias instead");
  if (estimates.empty()) fail("dimension", "no estimates to average");
  double sum = 0.0;
  for (double e : estimates) sum += (e - truth) / truth * 100.0;
  return sum / static_cast<double>(estimates.size());
}

std::pair<double, double> coverage_and_power(std::span<const double> ci_lows,
                                             std::span<const double> ci_highs,
                                             double truth) {
  if (ci_lows.size() != ci_highs.size())
    fail("dimension", "interval bound vectors differ in length");
  if (ci_lows.empty()) fail("dimension", "no intervals to evaluate");
  std::size_t covered = 0, excludes_zero = 0;
  for (std::size_t i = 0; i < ci_lows.size(); ++i) {
    if (ci_lows[i] > ci_highs[i])
      fail("data", "interval with lower bound above upper bound");
    if (ci_lows[i] <= truth && truth <= ci_highs[i]) ++covered;
    if (0.0 < ci_lows[i] || ci_highs[i] < 0.0) ++excludes_zero;
  }
  const double n = static_cast<double>(ci_lows.size());
  return {static_cast<double>(covered) / n, static_cast<double>(excludes_zero) / n};
}

namespace {

std::uint64_t replication_seed(const SimCondition& cond, int rep) {
  std::uint64_t h = mix64(cond.seed);
  h = hash_combine(h, hash_str(cond.id()));
  h = hash_combine(h, static_cast<std::uint64_t>(rep));
  return h;
}

RepRecord run_isdm_replication(const SimCondition& cond, int cond_idx, int rep) {
  RepRecord rec;
  rec.condition = cond_idx;
  rec.replication = rep;
  rec.ess_focal = kNaN;
  Rng data_rng = Rng::stream(replication_seed(cond, rep), {1});
  const GeneratedData data = generate_dataset(cond, data_rng);
  rec.truth = {data.truth.alpha1, data.truth.alpha2, data.truth.intercept};

  const OlsFit fit = isd_model(data.repeated, data.between);
  // Columns: intercept, ISD, mean.
  rec.estimate = {fit.coefs[1], fit.coefs[2], fit.coefs[0]};
  rec.ci_low = {fit.ci_low[1], fit.ci_low[2], fit.ci_low[0]};
  rec.ci_high = {fit.ci_high[1], fit.ci_high[2], fit.ci_high[0]};
  rec.converged = true;
  rec.ess_ok = true;
  return rec;
}

RepRecord run_bayes_replication(const SimCondition& cond, int cond_idx, int rep) {
  RepRecord rec;
  rec.condition = cond_idx;
  rec.replication = rep;
  rec.ess_focal = kNaN;
  const std::uint64_t rep_seed = replication_seed(cond, rep);
  Rng data_rng = Rng::stream(rep_seed, {1});
  const GeneratedData data = generate_dataset(cond, data_rng);
  rec.truth = {data.truth.alpha1, data.truth.alpha2, data.truth.intercept};
  rec.estimate = {kNaN, kNaN, kNaN};
  rec.ci_low = {kNaN, kNaN, kNaN};
  rec.ci_high = {kNaN, kNaN, kNaN};

  try {
    const VariabilityModel model(data.repeated, data.between,
                                 Design{DesignKind::VtoY, true});
    ChainConfig cc;
    cc.chains = cond.chains;
    cc.warmup = cond.warmup;
    cc.total_post_warmup = cond.total_iterations;
    cc.thin = cond.thin;
    cc.seed = hash_combine(rep_seed, 3);
    cc.threads = 1;  // parallelism lives at the replication level

    std::vector<std::vector<double>> inits;
    for (int c = 0; c < cc.chains; ++c) {
      Rng init_rng = Rng::stream(rep_seed, {2, static_cast<std::uint64_t>(c)});
      inits.push_back(model.layout().unconstrain(model.initialize(init_rng)));
    }
    const auto& layout = model.layout();
    const PosteriorDraws draws = run_chains(
        [&model](std::span<const double> z, std::span<double> g) {
          return model.log_posterior_grad(z, g);
        },
        layout.size(), cc, inits, layout.names(),
        [&layout](std::span<const double> z, std::span<double> out) {
          layout.constrain(z, out);
        });

    const DiagnosticsReport report = convergence_report(draws, "Yalpha_1");
    rec.converged = report.converged;
    rec.ess_ok = report.focal_ess_ok;
    rec.ess_focal = report.focal_ess;
    for (std::size_t p = 0; p < kTrackedParams.size(); ++p) {
      const auto pooled = draws.pooled(draws.param_index(kTrackedParams[p]));
      const ParameterSummary s = summarize(pooled, 0.95);
      rec.estimate[p] = s.mean;
      rec.ci_low[p] = s.ci_low;
      rec.ci_high[p] = s.ci_high;
    }
  } catch (const Error&) {
    rec.sampler_error = true;
    rec.converged = false;
    rec.ess_ok = false;
  }
  return rec;
}

}  // namespace

std::vector<SimMetrics> aggregate_metrics(const std::vector<SimCondition>& conditions,
                                          const std::vector<RepRecord>& records,
                                          Estimator estimator) {
  std::vector<SimMetrics> metrics;
  for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
    SimMetrics m;
    m.condition = conditions[ci].id();

    std::vector<const RepRecord*> all;
    for (const auto& r : records)
      if (r.condition == static_cast<int>(ci)) all.push_back(&r);
    m.n_total = static_cast<int>(all.size());

    int converged = 0, ess_ok = 0;
    std::vector<const RepRecord*> used;
    for (const auto* r : all) {
      if (r->converged) ++converged;
      if (r->ess_ok) ++ess_ok;
      const bool keep = estimator == Estimator::Bayesian
                            ? (r->converged && r->ess_ok && !r->sampler_error)
                            : !r->sampler_error;
      if (keep) used.push_back(r);
    }
    m.convergence_rate = all.empty() ? 0.0 : static_cast<double>(converged) / all.size();
    m.sufficient_ess_rate = all.empty() ? 0.0 : static_cast<double>(ess_ok) / all.size();
    m.n_used = static_cast<int>(used.size());

    if (!used.empty()) {
      auto column = [&](std::size_t p, auto member) {
        std::vector<double> v;
        v.reserve(used.size());
        for (const auto* r : used) v.push_back((r->*member)[p]);
        return v;
      };
      const double a1_truth = used.front()->truth[0];
      const double a2_truth = used.front()->truth[1];
      m.alpha1_rel_bias_pct = relative_bias_pct(column(0, &RepRecord::estimate), a1_truth);
      m.alpha2_rel_bias_pct = relative_bias_pct(column(1, &RepRecord::estimate), a2_truth);
      auto [c1, p1] = coverage_and_power(column(0, &RepRecord::ci_low),
                                         column(0, &RepRecord::ci_high), a1_truth);
      auto [c2, p2] = coverage_and_power(column(1, &RepRecord::ci_low),
                                         column(1, &RepRecord::ci_high), a2_truth);
      m.alpha1_coverage = c1;
      m.alpha1_power = p1;
      m.alpha2_coverage = c2;
      m.alpha2_power = p2;

      double bias = 0.0;
      for (const auto* r : used) bias += r->estimate[2] - r->truth[2];
      m.intercept_bias = bias / static_cast<double>(used.size());
      auto [ci_cov, ci_pow] = coverage_and_power(column(2, &RepRecord::ci_low),
                                                 column(2, &RepRecord::ci_high), 0.0);
      m.intercept_coverage = ci_cov;
      (void)ci_pow;  // power against a true zero is not reported
    } else {
      m.alpha1_rel_bias_pct = m.alpha2_rel_bias_pct = kNaN;
      m.alpha1_coverage = m.alpha2_coverage = kNaN;
      m.alpha1_power = m.alpha2_power = kNaN;
      m.intercept_bias = m.intercept_coverage = kNaN;
    }
    metrics.push_back(std::move(m));
  }
  return metrics;
}

StudyResult run_study(const std::vector<SimCondition>& conditions,
                      Estimator estimator, int threads) {
  for (const auto& c : conditions) c.validate();

  StudyResult result;
  result.estimator = estimator;
  result.conditions = conditions;

  struct Cell {
    int condition;
    int replication;
  };
  std::vector<Cell> cells;
  for (std::size_t ci = 0; ci < conditions.size(); ++ci)
    for (int r = 0; r < conditions[ci].replications; ++r)
      cells.push_back({static_cast<int>(ci), r});
  result.records.resize(cells.size());

  auto work = [&](std::size_t idx) {
    const Cell& cell = cells[idx];
    const SimCondition& cond = conditions[static_cast<std::size_t>(cell.condition)];
    result.records[idx] =
        estimator == Estimator::Bayesian
            ? run_bayes_replication(cond, cell.condition, cell.replication)
            : run_isdm_replication(cond, cell.condition, cell.replication);
  };

  int thread_count =
      threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  thread_count = std::max(1, std::min<int>(thread_count, static_cast<int>(cells.size())));

  if (thread_count == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int t = 0; t < thread_count; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
          try {
            work(i);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  result.metrics = aggregate_metrics(conditions, result.records, estimator);
  return result;
}

void write_records_csv(const std::string& path, const StudyResult& result) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& rec : result.records) {
    const std::string cond_id =
        result.conditions[static_cast<std::size_t>(rec.condition)].id();
    for (std::size_t p = 0; p < kTrackedParams.size(); ++p) {
      auto cell = [&](double v) { return std::isnan(v) ? std::string() : fmt17(v); };
      rows.push_back({cond_id, std::to_string(rec.replication), kTrackedParams[p],
                      cell(rec.estimate[p]), cell(rec.ci_low[p]), cell(rec.ci_high[p]),
                      rec.converged ? "1" : "0", cell(rec.ess_focal),
                      cell(rec.truth[p])});
    }
  }
  write_csv(path, {"condition", "replication", "parameter", "estimate", "ci_low",
                   "ci_high", "converged", "ess_focal", "truth"},
            rows);
}

std::vector<RepRecord> read_records_csv(const std::string& path,
                                        const std::vector<SimCondition>& conditions) {
  const CsvTable table = CsvTable::read(path);
  auto col = [&](const char* name) {
    const int c = table.column(name);
    if (c < 0) fail("data", path + ": missing column " + name);
    return static_cast<std::size_t>(c);
  };
  const std::size_t c_cond = col("condition"), c_rep = col("replication"),
                    c_par = col("parameter"), c_est = col("estimate"),
                    c_lo = col("ci_low"), c_hi = col("ci_high"),
                    c_conv = col("converged"), c_ess = col("ess_focal"),
                    c_truth = col("truth");

  auto cond_index = [&](const std::string& id) {
    for (std::size_t i = 0; i < conditions.size(); ++i)
      if (conditions[i].id() == id) return static_cast<int>(i);
    fail("data", path + ": unknown condition id " + id);
  };
  auto param_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < kTrackedParams.size(); ++i)
      if (name == kTrackedParams[i]) return i;
    fail("data", path + ": unknown parameter " + name);
  };
  auto value = [&](const std::string& field, std::size_t row) {
    return field.empty() ? kNaN : parse_double(field, path, row);
  };

  std::vector<RepRecord> records;
  std::size_t row = 1;
  for (const auto& r : table.rows) {
    ++row;
    const int ci = cond_index(r[c_cond]);
    const int rep = static_cast<int>(parse_double(r[c_rep], path, row));
    RepRecord* rec = nullptr;
    for (auto& existing : records) {
      if (existing.condition == ci && existing.replication == rep) {
        rec = &existing;
        break;
      }
    }
    if (!rec) {
      records.emplace_back();
      rec = &records.back();
      rec->condition = ci;
      rec->replication = rep;
    }
    const std::size_t p = param_index(r[c_par]);
    rec->estimate[p] = value(r[c_est], row);
    rec->ci_low[p] = value(r[c_lo], row);
    rec->ci_high[p] = value(r[c_hi], row);
    rec->converged = r[c_conv] == "1";
    rec->ess_ok = std::isnan(value(r[c_ess], row)) ? rec->converged
                                                   : value(r[c_ess], row) >= 200.0;
    rec->ess_focal = value(r[c_ess], row);
    rec->truth[p] = value(r[c_truth], row);
    rec->sampler_error = std::isnan(rec->estimate[p]) && rec->converged == false &&
                         r[c_est].empty() && std::isnan(rec->ess_focal);
  }
  return records;
}

void write_metrics_csv(const std::string& path, const StudyResult& result) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& m : result.metrics) {
    auto cell = [&](double v) { return std::isnan(v) ? std::string() : fmt17(v); };
    rows.push_back({m.condition, "Yalpha_1", std::to_string(m.n_total),
                    std::to_string(m.n_used), cell(m.alpha1_rel_bias_pct), "",
                    cell(m.alpha1_coverage), cell(m.alpha1_power),
                    cell(m.convergence_rate), cell(m.sufficient_ess_rate)});
    rows.push_back({m.condition, "Yalpha_2", std::to_string(m.n_total),
                    std::to_string(m.n_used), cell(m.alpha2_rel_bias_pct), "",
                    cell(m.alpha2_coverage), cell(m.alpha2_power),
                    cell(m.convergence_rate), cell(m.sufficient_ess_rate)});
    rows.push_back({m.condition, "YB_1", std::to_string(m.n_total),
                    std::to_string(m.n_used), "", cell(m.intercept_bias),
                    cell(m.intercept_coverage), "", cell(m.convergence_rate),
                    cell(m.sufficient_ess_rate)});
  }
  write_csv(path, {"condition", "parameter", "n_total", "n_used", "relative_bias_pct",
                   "bias", "coverage", "power", "convergence_rate",
                   "sufficient_ess_rate"},
            rows);
}

void write_table_csvs(const std::string& directory, const StudyResult& result) {
  // Column order mirrors the published tables: low variability before high,
  // N = 80 before 250, k = 5 before 14.
  std::vector<std::string> cell_order;
  for (bool hi : {false, true})
    for (int n : {80, 250})
      for (int k : {5, 14})
        cell_order.push_back(std::string(hi ? "hi" : "lo") + "_N" + std::to_string(n) +
                             "_k" + std::to_string(k));

  auto emit = [&](const std::string& name,
                  auto value_of) {
    std::vector<std::string> header = {"alpha1_std", "parameter"};
    for (const auto& c : cell_order) header.push_back(c);
    std::vector<std::vector<std::string>> rows;
    for (double a1 : {0.2, 0.5}) {
      const std::string suffix = "_a" + std::to_string(static_cast<int>(std::lround(a1 * 100)));
      for (const char* param : {"Yalpha_1", "Yalpha_2"}) {
        std::vector<std::string> row = {fmt17(a1), param};
        bool any = false;
        for (const auto& cell : cell_order) {
          std::string out;
          for (const auto& m : result.metrics) {
            if (m.condition == cell + suffix) {
              const double v = value_of(m, std::string(param) == "Yalpha_1");
              if (!std::isnan(v)) out = fmt17(v);
              any = true;
            }
          }
          row.push_back(out);
        }
        if (any) rows.push_back(std::move(row));
      }
    }
    write_csv(directory + "/" + name, header, rows);
  };

  emit("table_relative_bias.csv", [](const SimMetrics& m, bool a1) {
    return a1 ? m.alpha1_rel_bias_pct : m.alpha2_rel_bias_pct;
  });
  emit("table_coverage.csv", [](const SimMetrics& m, bool a1) {
    return a1 ? m.alpha1_coverage : m.alpha2_coverage;
  });
  emit("table_power.csv", [](const SimMetrics& m, bool a1) {
    return a1 ? m.alpha1_power : m.alpha2_power;
  });

  // Convergence / sufficient-ESS shares and the intercept supplement have a
  // single row per alpha block.
  auto emit_single = [&](const std::string& name, const char* first_label,
                         const char* second_label, auto value_of) {
    std::vector<std::string> header = {"alpha1_std", "measure"};
    for (const auto& c : cell_order) header.push_back(c);
    std::vector<std::vector<std::string>> rows;
    for (double a1 : {0.2, 0.5}) {
      const std::string suffix = "_a" + std::to_string(static_cast<int>(std::lround(a1 * 100)));
      for (int which = 0; which < 2; ++which) {
        std::vector<std::string> row = {fmt17(a1),
                                        which == 0 ? first_label : second_label};
        bool any = false;
        for (const auto& cell : cell_order) {
          std::string out;
          for (const auto& m : result.metrics) {
            if (m.condition == cell + suffix) {
              const double v = value_of(m, which == 0);
              if (!std::isnan(v)) out = fmt17(v);
              any = true;
            }
          }
          row.push_back(out);
        }
        if (any) rows.push_back(std::move(row));
      }
    }
    write_csv(directory + "/" + name, header, rows);
  };

  emit_single("table_convergence.csv", "converged", "sufficient_ess",
              [](const SimMetrics& m, bool first) {
                return first ? m.convergence_rate : m.sufficient_ess_rate;
              });
  emit_single("table_intercept.csv", "bias_x100", "coverage",
              [](const SimMetrics& m, bool first) {
                return first ? m.intercept_bias * 100.0 : m.intercept_coverage;
              });
}

}  // namespace varmod
