#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace iscc {

/// Malformed input: non-Hermitian matrix, dimension mismatch, bad scenario field.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

class NotPsdError : public std::runtime_error {
 public:
  NotPsdError(std::size_t pivot, double value)
      : std::runtime_error("matrix is not positive semidefinite (pivot " +
                           std::to_string(pivot) + ", value " + std::to_string(value) + ")"),
        pivot_(pivot),
        value_(value) {}

  std::size_t pivot() const { return pivot_; }
  double value() const { return value_; }

 private:
  std::size_t pivot_;
  double value_;
};

/// A phase time has a zero denominator with a positive numerator.
class InfeasibleTiming : public std::runtime_error {
 public:
  explicit InfeasibleTiming(const std::string& what) : std::runtime_error(what) {}
};

/// A subproblem has an empty feasible set for the current fixed blocks.
class InfeasibleSubproblem : public std::runtime_error {
 public:
  InfeasibleSubproblem(const std::string& what, std::size_t user, std::string constraint)
      : std::runtime_error(what), user_(user), constraint_(std::move(constraint)) {}

  std::size_t user() const { return user_; }
  const std::string& constraint() const { return constraint_; }

 private:
  std::size_t user_;
  std::string constraint_;
};

class NumericalFailure : public std::runtime_error {
 public:
  explicit NumericalFailure(const std::string& what) : std::runtime_error(what) {}
};

/// No strictly feasible interior start could be constructed for the barrier solver.
class StartInfeasible : public std::runtime_error {
 public:
  explicit StartInfeasible(const std::string& what) : std::runtime_error(what) {}
};

class ScenarioInfeasible : public std::runtime_error {
 public:
  explicit ScenarioInfeasible(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace iscc
