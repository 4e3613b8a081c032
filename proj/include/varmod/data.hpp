#ifndef VARMOD_DATA_HPP
#define VARMOD_DATA_HPP

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace varmod {

/// Long-format within-person observations, grouped by a dense subject index.
/// `covariates` is row-major with one row per observation (may be empty).
struct RepeatedData {
  std::vector<int> subject;          // 0..n_subjects-1, one entry per observation
  std::vector<double> value;
  std::vector<double> covariates;    // row-major, n_obs x n_covariates
  std::size_t n_covariates = 0;
  std::vector<std::string> subject_labels;  // optional, size n_subjects

  std::size_t n_obs() const { return value.size(); }
  int n_subjects() const;

  double covariate(std::size_t obs, std::size_t col) const {
    return covariates[obs * n_covariates + col];
  }

  /// Checks index coverage, finiteness, and covariate column rank.
  void validate() const;
};

/// One row per subject: outcome, optional mediator, between-level covariates
/// (row-major, without the implicit intercept column).
struct BetweenData {
  std::vector<double> outcome;
  std::optional<std::vector<double>> mediator;
  std::vector<double> covariates;    // row-major, n x n_covariates
  std::size_t n_covariates = 0;

  std::size_t n() const { return outcome.size(); }

  double covariate(std::size_t row, std::size_t col) const {
    return covariates[row * n_covariates + col];
  }

  void validate(std::size_t n_subjects) const;
};

enum class DesignKind { VtoY, VtoMtoY };

struct Design {
  DesignKind kind = DesignKind::VtoY;
  bool use_latent_mean = true;   // whether mu_j enters the second-stage regressions

  bool mediation() const { return kind == DesignKind::VtoMtoY; }
};

/// Per-subject observation grouping (built once, shared read-only).
struct SubjectIndex {
  std::vector<std::size_t> offsets;  // size n_subjects + 1
  std::vector<std::size_t> order;    // observation indices sorted by subject

  static SubjectIndex build(const RepeatedData& data);

  std::size_t count(int j) const { return offsets[j + 1] - offsets[j]; }
};

}  // namespace varmod

#endif
