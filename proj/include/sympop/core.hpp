#ifndef SYMPOP_CORE_HPP
#define SYMPOP_CORE_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sympop {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Scalar used when composing derived rate blocks. Sums of two or three
/// doubles in a bounded dynamic range are exact at 64 mantissa bits, which
/// is what makes the 3 -> 2 transform invertible without loss.
using ExtendedScalar = long double;
using ExtendedMatrix = MatrixT<ExtendedScalar>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments when building a game, protocol or grid.
class ConstructionError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A revision protocol produced a negative or non-finite rate.
class ProtocolViolation : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class IntegrationDiverged : public Error {
 public:
  IntegrationDiverged(const std::string& what, std::int64_t step)
      : Error(what), step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

class GridTooLarge : public Error {
 public:
  GridTooLarge(const std::string& what, double size) : Error(what), size_(size) {}
  double size() const { return size_; }

 private:
  double size_;
};

class ReducibleChain : public Error {
 public:
  ReducibleChain(const std::string& what, std::vector<std::vector<std::size_t>> classes)
      : Error(what), classes_(std::move(classes)) {}
  const std::vector<std::vector<std::size_t>>& classes() const { return classes_; }

 private:
  std::vector<std::vector<std::size_t>> classes_;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

class EmptySupport : public Error {
 public:
  using Error::Error;
};

}  // namespace sympop

#endif  // SYMPOP_CORE_HPP
