#pragma once

#include <stdexcept>
#include <string>

namespace genvp {

// Base of every error raised by the library. The CLI maps the concrete
// subclasses onto stable exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent configuration (unknown keys, empty attribute
// sets, rule kinds an attribute cannot carry, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A rule or choice list cannot be realized on the given domains within the
// bounded number of resampling attempts.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// Violated operation precondition (shape mismatch, bad view index, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class InvalidAugmentation : public Error {
 public:
  using Error::Error;
};

class LegendError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss during training; `term` names the first offending term.
class TrainingFault : public Error {
 public:
  TrainingFault(std::string term, long step)
      : Error("non-finite loss term '" + term + "' at step " + std::to_string(step)),
        term_(std::move(term)),
        step_(step) {}

  const std::string& term() const { return term_; }
  long step() const { return step_; }

 private:
  std::string term_;
  long step_;
};

}  // namespace genvp
