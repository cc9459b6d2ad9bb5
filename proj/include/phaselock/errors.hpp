#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace phaselock {

// Arccos of an estimator left its domain, or both intensities vanished.
class UndefinedPhaseError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class UndefinedRatioError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptySeriesError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// Collects every violated invariant of a configuration, not only the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> issues)
      : std::runtime_error(join(issues)), issues_(std::move(issues)) {}

  const std::vector<std::string>& issues() const noexcept { return issues_; }

 private:
  static std::string join(const std::vector<std::string>& issues) {
    std::string out = "invalid configuration:";
    for (const auto& s : issues) {
      out += "\n  - ";
      out += s;
    }
    return out;
  }

  std::vector<std::string> issues_;
};

}  // namespace phaselock
