#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace isac {

/// Base of every domain error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No point satisfies the constraints (beam-gain budget, endpoints, QoS, ...).
class Infeasible : public Error {
 public:
  using Error::Error;
};

/// Numerical situation the closed forms rule out analytically.
class Degenerate : public Error {
 public:
  using Error::Error;
};

class SubproblemInfeasible : public Infeasible {
 public:
  using Infeasible::Infeasible;
};

class RoundingInfeasible : public Infeasible {
 public:
  using Infeasible::Infeasible;
};

class BenchmarkInfeasible : public Infeasible {
 public:
  using Infeasible::Infeasible;
};

class NonConvergence : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace isac
