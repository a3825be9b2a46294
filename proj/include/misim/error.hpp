#pragma once

#include <stdexcept>
#include <string>

namespace misim {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

// Cox fit impossible (no events, or all events in one arm).
class EstimationError : public Error {
 public:
  using Error::Error;
};

// Model cannot produce a prediction for this data shape (IP without target OS).
class NotEstimable : public Error {
 public:
  using Error::Error;
};

// Non-finite state inside an MCMC kernel.
class FitFailure : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace misim
