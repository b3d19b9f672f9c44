#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fastinf {

// Bad dimensions, malformed files, inconsistent configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values encountered during computation.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Optimizer produced a non-finite loss; carries the offending step.
struct TrainingError : NumericError {
  std::size_t step;
  TrainingError(const std::string& msg, std::size_t step_)
      : NumericError(msg + " (step " + std::to_string(step_) + ")"), step(step_) {}
};

// LiSSA estimate blew past the divergence guard.
struct DivergenceError : NumericError {
  int repetition;
  long iteration;
  DivergenceError(const std::string& msg, int rep, long iter)
      : NumericError(msg + " (repetition " + std::to_string(rep) + ", iteration " +
                     std::to_string(iter) + ")"),
        repetition(rep),
        iteration(iter) {}
};

// Requested computation exceeds a hard size guard.
struct CapabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Hessian numerically singular; damping > 0 would fix it.
struct SingularityError : NumericError {
  using NumericError::NumericError;
};

// Statistic undefined on the given input (e.g. zero variance).
struct DegenerateInputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A selection rule matched no candidates.
struct SelectionExhaustedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fastinf
