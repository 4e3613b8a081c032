#ifndef VARMOD_ERRORS_HPP
#define VARMOD_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace varmod {

/// Library-wide error with a machine-parseable category tag
/// ("data", "dimension", "numeric", "config", "io").
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(category + ": " + message),
        category_(std::move(category)) {}

  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

[[noreturn]] inline void fail(const char* category, const std::string& msg) {
  throw Error(category, msg);
}

}  // namespace varmod

#endif
