#ifndef VARMOD_SIMULATION_HPP
#define VARMOD_SIMULATION_HPP

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "varmod/data.hpp"
#include "varmod/rng.hpp"

namespace varmod {

/// One cell of the 2x2x2x2 factorial design. Only the published grid is
/// admitted: k in {5, 14}, N in {80, 250}, standardized alpha1 in {.2, .5},
/// gamma in {(1, .25), (4, 1)}; alpha2 is fixed at .3 throughout.
struct SimCondition {
  int k = 5;
  int n_subjects = 80;
  double alpha1_std = 0.2;
  double alpha2_std = 0.3;
  double gamma_shape = 1.0;
  double gamma_rate = 0.25;
  int replications = 100;
  int chains = 4;
  int warmup = 500;
  int thin = 4;
  long total_iterations = 4000;  // pre-thinning post-warmup, summed over chains
  std::uint64_t seed = 0;

  bool high_variability() const { return gamma_shape == 1.0; }
  std::string id() const;
  void validate() const;

  /// Published per-condition thinning: high variability thins 4 (k = 5) or
  /// 2 (k = 14); low variability thins 10 throughout. Total iterations are
  /// set so 1,000 draws remain after thinning (250 per chain).
  static SimCondition paper_cell(bool high_variability, int n_subjects, int k,
                                 double alpha1_std, int replications,
                                 std::uint64_t seed);
  static std::vector<SimCondition> paper_grid(int replications, std::uint64_t seed);

  /// Parses ids of the form lo_N80_k5_a20 / hi_N250_k14_a50.
  static SimCondition from_id(const std::string& id, int replications,
                              std::uint64_t seed);
};

struct TrueParams {
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double intercept = 0.0;
};

struct GeneratedData {
  RepeatedData repeated;
  BetweenData between;
  TrueParams truth;
};

/// Converts standardized second-stage coefficients to the unstandardized
/// values used for generation, holding the residual variance at one:
/// Var(Y) = 1 / (1 - a^2 - b^2), alpha_u = std * SD(Y) / SD(predictor).
std::pair<double, double> unstandardize(double alpha1_std, double alpha2_std,
                                        double sd_sigma_j, double sd_mu_j);

/// Four-step generation: mu_j ~ N(0,1); sigma_j ~ Gamma(shape, rate);
/// k draws of V_ij ~ N(mu_j, sigma_j); Y_j ~ N(a1 sigma_j + a2 mu_j, 1).
GeneratedData generate_dataset(const SimCondition& cond, Rng& rng);

/// Mean of (estimate - truth) / truth * 100 over replications.
double relative_bias_pct(std::span<const double> estimates, double truth);

/// Proportion of closed intervals containing the truth, and excluding zero.
std::pair<double, double> coverage_and_power(std::span<const double> ci_lows,
                                             std::span<const double> ci_highs,
                                             double truth);

enum class Estimator { ISDM, Bayesian };

/// Parameters tracked per replication: alpha1, alpha2, and the Y intercept.
inline constexpr std::array<const char*, 3> kTrackedParams = {"Yalpha_1", "Yalpha_2",
                                                              "YB_1"};

struct RepRecord {
  int condition = 0;
  int replication = 0;
  bool sampler_error = false;
  bool converged = false;
  bool ess_ok = false;
  double ess_focal = 0.0;  // NaN where not applicable
  std::array<double, 3> estimate{};
  std::array<double, 3> ci_low{};
  std::array<double, 3> ci_high{};
  std::array<double, 3> truth{};
};

struct SimMetrics {
  std::string condition;
  int n_total = 0;
  int n_used = 0;  // replications passing the convergence and ESS filters
  double convergence_rate = 0.0;
  double sufficient_ess_rate = 0.0;
  double alpha1_rel_bias_pct = 0.0;
  double alpha2_rel_bias_pct = 0.0;
  double alpha1_coverage = 0.0;
  double alpha2_coverage = 0.0;
  double alpha1_power = 0.0;
  double alpha2_power = 0.0;
  double intercept_bias = 0.0;
  double intercept_coverage = 0.0;
};

struct StudyResult {
  Estimator estimator = Estimator::ISDM;
  std::vector<SimCondition> conditions;
  std::vector<RepRecord> records;   // condition-major, replication order
  std::vector<SimMetrics> metrics;  // one per condition
};

/// Runs every (condition, replication) cell. Replication seeds derive from
/// hash(condition seed, condition id, replication index), so any prefix or
/// single condition can be reproduced in isolation; individual sampler
/// failures are recorded as non-converged rather than aborting the study.
StudyResult run_study(const std::vector<SimCondition>& conditions,
                      Estimator estimator, int threads = 0);

/// Recomputes the per-condition metrics from stored records (the aggregation
/// used internally; exposed so tables can be re-derived exactly).
std::vector<SimMetrics> aggregate_metrics(const std::vector<SimCondition>& conditions,
                                          const std::vector<RepRecord>& records,
                                          Estimator estimator);

void write_records_csv(const std::string& path, const StudyResult& result);
std::vector<RepRecord> read_records_csv(const std::string& path,
                                        const std::vector<SimCondition>& conditions);
void write_metrics_csv(const std::string& path, const StudyResult& result);

/// The Tables 1-4 / supplement shapes: one CSV per outcome with a column
/// per condition cell.
void write_table_csvs(const std::string& directory, const StudyResult& result);

}  // namespace varmod

#endif
