#ifndef VARMOD_DIAGNOSTICS_HPP
#define VARMOD_DIAGNOSTICS_HPP

#include <string>
#include <vector>

#include "varmod/sampler.hpp"

namespace varmod {

/// A scalar diagnostic plus a degeneracy flag. Constant chains leave the
/// PSRF at +inf and pin the ESS at the total draw count, both flagged.
struct ScalarDiag {
  double value = 0.0;
  bool degenerate = false;
};

/// Potential scale reduction factor (Rhat) across chains of equal length.
/// With `split` each chain is halved first and the halves treated as chains.
ScalarDiag psrf(const std::vector<std::vector<double>>& chains, bool split = false);

/// Effective sample size from variogram autocorrelation estimates against
/// the multi-chain variance, with the paired initial-positive-sequence
/// truncation rule; clipped to (0, total draws].
ScalarDiag ess(const std::vector<std::vector<double>>& chains);

struct DiagnosticsReport {
  std::vector<std::string> names;
  std::vector<double> rhat;
  std::vector<double> ess;
  std::vector<bool> degenerate;
  bool converged = false;     // all rhat < 1.1
  double max_rhat = 0.0;
  double min_ess = 0.0;
  std::string focal;
  double focal_ess = 0.0;
  bool focal_ess_ok = false;  // focal parameter ess >= 200
};

/// Per-parameter PSRF and ESS over a full draw set, with the convergence
/// rule (all Rhat < 1.1) and the focal-parameter ESS >= 200 check.
DiagnosticsReport convergence_report(const PosteriorDraws& draws,
                                     const std::string& focal);

}  // namespace varmod

#endif
