#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ela {

/// Malformed or inconsistent input data. Carries one message per offending row.
class DataError : public std::runtime_error {
public:
  explicit DataError(std::vector<std::string> issues);
  explicit DataError(const std::string& issue) : DataError(std::vector<std::string>{issue}) {}

  const std::vector<std::string>& issues() const noexcept { return issues_; }

private:
  std::vector<std::string> issues_;
};

/// Invalid model construction: unknown family, schema mismatch, bad parameters.
class ModelError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Non-finite likelihood values, non-PD curvature, rank-deficient designs.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Iterative solver gave up. `last_iterate` holds where it stopped.
class ConvergenceError : public std::runtime_error {
public:
  ConvergenceError(const std::string& what, Eigen::VectorXd last_iterate)
      : std::runtime_error(what), last_iterate_(std::move(last_iterate)) {}

  const Eigen::VectorXd& last_iterate() const noexcept { return last_iterate_; }

private:
  Eigen::VectorXd last_iterate_;
};

} // namespace ela
