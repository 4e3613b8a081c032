#ifndef VARMOD_CLI_HPP
#define VARMOD_CLI_HPP

#include <string>
#include <vector>

#include "varmod/data.hpp"

namespace varmod::cli {

/// Parsed within/between files with the column names that produced them.
struct IngestResult {
  RepeatedData repeated;
  BetweenData between;
  std::vector<std::string> within_covariate_names;
  std::vector<std::string> between_covariate_names;
  std::string mediator_name;  // empty when no mediator was requested
};

/// Loads the two CSVs, indexes subjects densely in between-file order, and
/// cross-checks referential integrity in both directions. `mediator_column`
/// may be empty; with `need_mediator` the column named "mediator" or the
/// third column is used as fallback.
IngestResult ingest(const std::string& within_csv, const std::string& between_csv,
                    bool need_mediator, const std::string& mediator_column = {});

/// Entry point behind main(): args exclude the program name. Returns the
/// process exit code (0 converged / ok, 2 completed but not converged,
/// 1 error).
int run(const std::vector<std::string>& args);

}  // namespace varmod::cli

#endif
