#pragma once

#include <stdexcept>
#include <string>

namespace medsurv {

/// Malformed or inconsistent input: bad CSV, unknown hypothesis, invalid
/// contrast matrix, out-of-range parameters.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A statistic could not be computed from otherwise valid data, e.g. a group
/// whose Kaplan-Meier curve never reaches 1/2 or a zero-width interval.
class EstimationError : public std::runtime_error {
 public:
  EstimationError(std::string group, const std::string& what)
      : std::runtime_error(group.empty() ? what : "group '" + group + "': " + what),
        group_(std::move(group)) {}

  const std::string& group() const noexcept { return group_; }

 private:
  std::string group_;
};

/// A simulation scenario excludes too many replications to be meaningful.
class InfeasibleScenario : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace medsurv
