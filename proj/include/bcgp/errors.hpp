#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bcgp {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class StepTooCoarse : public Error {
 public:
  using Error::Error;
};

class SolverFailure : public Error {
 public:
  using Error::Error;
};

class MTooLarge : public Error {
 public:
  using Error::Error;
};

class PointOutsideDomain : public Error {
 public:
  explicit PointOutsideDomain(std::size_t index)
      : Error("point " + std::to_string(index) + " lies outside the domain"), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class IllConditioned : public Error {
 public:
  using Error::Error;
};

class OptimizerFailure : public Error {
 public:
  using Error::Error;
};

class DegenerateTruth : public Error {
 public:
  using Error::Error;
};

class ZeroVariance : public Error {
 public:
  using Error::Error;
};

class EmptyTrainingSet : public Error {
 public:
  using Error::Error;
};

class MissingModel : public Error {
 public:
  using Error::Error;
};

}  // namespace bcgp
