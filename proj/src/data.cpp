#include "varmod/data.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "varmod/errors.hpp"

namespace varmod {

int RepeatedData::n_subjects() const {
  if (subject.empty()) return 0;
  return *std::max_element(subject.begin(), subject.end()) + 1;
}

void RepeatedData::validate() const {
  if (value.empty()) fail("data", "repeated data has no observations");
  if (subject.size() != value.size())
    fail("dimension", "subject index and value lengths differ");
  if (n_covariates > 0 && covariates.size() != value.size() * n_covariates)
    fail("dimension", "within-level covariate matrix shape mismatch");

  const int n = n_subjects();
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (subject[i] < 0 || subject[i] >= n)
      fail("data", "subject index out of range at observation " + std::to_string(i));
    seen[static_cast<std::size_t>(subject[i])] = 1;
    if (!std::isfinite(value[i]))
      fail("data", "non-finite measurement at observation " + std::to_string(i));
  }
  for (int j = 0; j < n; ++j) {
    if (!seen[static_cast<std::size_t>(j)])
      fail("data", "subject index " + std::to_string(j) + " has no observations");
  }
  for (double c : covariates) {
    if (!std::isfinite(c)) fail("data", "non-finite within-level covariate");
  }
  if (!subject_labels.empty() && subject_labels.size() != static_cast<std::size_t>(n))
    fail("dimension", "subject label count does not match subject count");

  if (n_covariates > 0) {
    Eigen::MatrixXd x(value.size(), n_covariates + 1);
    for (std::size_t i = 0; i < value.size(); ++i) {
      x(static_cast<Eigen::Index>(i), 0) = 1.0;
      for (std::size_t c = 0; c < n_covariates; ++c)
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c + 1)) =
            covariate(i, c);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < x.cols())
      fail("data",
           "within-level covariates are rank deficient (constant columns are "
           "not allowed; the intercept is implicit)");
  }
}

void BetweenData::validate(std::size_t n_subjects) const {
  if (outcome.size() != n_subjects)
    fail("dimension", "outcome length does not match subject count");
  if (mediator && mediator->size() != n_subjects)
    fail("dimension", "mediator length does not match subject count");
  if (n_covariates > 0 && covariates.size() != n_subjects * n_covariates)
    fail("dimension", "between-level covariate matrix shape mismatch");
  for (double y : outcome)
    if (!std::isfinite(y)) fail("data", "non-finite outcome value");
  if (mediator)
    for (double m : *mediator)
      if (!std::isfinite(m)) fail("data", "non-finite mediator value");
  for (double c : covariates)
    if (!std::isfinite(c)) fail("data", "non-finite between-level covariate");

  if (n_covariates > 0) {
    Eigen::MatrixXd x(n_subjects, n_covariates + 1);
    for (std::size_t i = 0; i < n_subjects; ++i) {
      x(static_cast<Eigen::Index>(i), 0) = 1.0;
      for (std::size_t c = 0; c < n_covariates; ++c)
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c + 1)) =
            covariate(i, c);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < x.cols())
      fail("data",
           "between-level covariates are rank deficient (constant columns are "
           "not allowed; the intercept is implicit)");
  }
}

SubjectIndex SubjectIndex::build(const RepeatedData& data) {
  const int n = data.n_subjects();
  SubjectIndex index;
  index.offsets.assign(static_cast<std::size_t>(n) + 1, 0);
  for (int j : data.subject) index.offsets[static_cast<std::size_t>(j) + 1]++;
  for (std::size_t j = 1; j < index.offsets.size(); ++j)
    index.offsets[j] += index.offsets[j - 1];

  index.order.resize(data.n_obs());
  std::vector<std::size_t> cursor(index.offsets.begin(), index.offsets.end() - 1);
  for (std::size_t i = 0; i < data.n_obs(); ++i)
    index.order[cursor[static_cast<std::size_t>(data.subject[i])]++] = i;
  return index;
}

}  // namespace varmod
