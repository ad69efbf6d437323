#ifndef FORMATION_ERRORS_HPP
#define FORMATION_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace formation {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or index mismatch between graphs, gains and vectors.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Formation whose invariance basis has rank < 4 (e.g. coincident agents).
class DegenerateFormationError : public Error {
 public:
  using Error::Error;
};

// Only the zero gain vector satisfies A N = 0.
class InfeasibleStructureError : public Error {
 public:
  using Error::Error;
};

// Best achievable margin is not positive.
class NotStabilizableError : public Error {
 public:
  NotStabilizableError(const std::string& what, double objective)
      : Error(what), objective_(objective) {}
  double objective() const noexcept { return objective_; }

 private:
  double objective_;
};

class ContractViolation : public Error {
 public:
  using Error::Error;
};

class NumericalDivergence : public Error {
 public:
  using Error::Error;
};

// Scenario / gains file problems. `where` names the offending field or line.
class ParseError : public Error {
 public:
  ParseError(const std::string& where, const std::string& what)
      : Error(where + ": " + what), where_(where) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

}  // namespace formation

#endif  // FORMATION_ERRORS_HPP
