#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace iteravg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Thrown when an argument violates a documented precondition.
/// `condition()` is a stable snake_case name for the violated rule.
class PreconditionError : public std::invalid_argument {
 public:
  PreconditionError(std::string condition, const std::string& detail)
      : std::invalid_argument(condition + ": " + detail), condition_(std::move(condition)) {}

  const std::string& condition() const noexcept { return condition_; }

 private:
  std::string condition_;
};

/// Objective has no usable strong-convexity constant (alpha ~ 0).
class NotStronglyConvex : public PreconditionError {
 public:
  explicit NotStronglyConvex(const std::string& detail)
      : PreconditionError("not_strongly_convex", detail) {}
};

/// Divergence, singular systems, iteration caps.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input files (IDX, path records, reports).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace iteravg
