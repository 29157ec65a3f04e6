#pragma once

#include <stdexcept>
#include <string>

namespace trailstop {

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Result not representable as a plain double.
class RangeError : public std::range_error {
 public:
  using std::range_error::range_error;
};

// A structural hypothesis of the stopping problem does not hold numerically.
class AssumptionFailure : public std::runtime_error {
 public:
  AssumptionFailure(std::string clause, const std::string& detail)
      : std::runtime_error("assumption failed [" + clause + "]: " + detail),
        clause_(std::move(clause)) {}
  const std::string& clause() const noexcept { return clause_; }

 private:
  std::string clause_;
};

class UnsupportedModel : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UnsupportedReward : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NoFiniteThreshold : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IllConditionedFloor : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A truncated computation could not meet its error target.
class AccuracyNotReached : public std::runtime_error {
 public:
  AccuracyNotReached(const std::string& what, double bound)
      : std::runtime_error(what + " (achieved bound " + std::to_string(bound) + ")"),
        bound_(bound) {}
  double bound() const noexcept { return bound_; }

 private:
  double bound_;
};

// Monte Carlo horizon left too many paths unresolved.
class HorizonError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user configuration.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace trailstop
