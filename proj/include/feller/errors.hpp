#pragma once

#include <stdexcept>
#include <string>

#include "feller/types.hpp"

namespace feller {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define FELLER_DEFINE_ERROR(Name)          \
  class Name : public Error {              \
   public:                                 \
    explicit Name(const std::string& what) \
        : Error(#Name ": " + what) {}      \
  }

FELLER_DEFINE_ERROR(NotSymmetric);
FELLER_DEFINE_ERROR(NotPSD);
FELLER_DEFINE_ERROR(NotInCameronMartin);
FELLER_DEFINE_ERROR(UnsupportedDim);
FELLER_DEFINE_ERROR(Overflow);
FELLER_DEFINE_ERROR(QuadratureDiverged);
FELLER_DEFINE_ERROR(NotControllable);
FELLER_DEFINE_ERROR(BadBounds);
FELLER_DEFINE_ERROR(DegenerateCovariance);
FELLER_DEFINE_ERROR(ExcessLeak);
FELLER_DEFINE_ERROR(GridMismatch);
FELLER_DEFINE_ERROR(NoContraction);
FELLER_DEFINE_ERROR(Unstable);
FELLER_DEFINE_ERROR(InvalidArgument);
FELLER_DEFINE_ERROR(ConfigError);

#undef FELLER_DEFINE_ERROR

/// S(t) maps some direction of E outside the Cameron–Martin space of Q_t.
class NotStrongFeller : public Error {
 public:
  NotStrongFeller(const std::string& what, Vec direction)
      : Error("NotStrongFeller: " + what), direction_(std::move(direction)) {}
  const Vec& direction() const { return direction_; }

 private:
  Vec direction_;
};

class NotConverged : public Error {
 public:
  NotConverged(const std::string& what, int iterations)
      : Error("NotConverged: " + what), iterations_(iterations) {}
  int iterations() const { return iterations_; }

 private:
  int iterations_;
};

}  // namespace feller
