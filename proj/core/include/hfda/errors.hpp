#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hfda {

/// Invalid arguments: dimension mismatches, out-of-range options, bad input files.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical integration produced a non-finite state.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t node, double time)
      : std::runtime_error("non-finite state at grid node " + std::to_string(node) +
                           " (t = " + std::to_string(time) + ")"),
        node_(node),
        time_(time) {}

  std::size_t node() const noexcept { return node_; }
  double time() const noexcept { return time_; }

 private:
  std::size_t node_;
  double time_;
};

/// A linear solve inside an optimizer failed (matrix not numerically SPD).
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double condition_estimate)
      : std::runtime_error(what + " (condition estimate " + std::to_string(condition_estimate) +
                           ")"),
        condition_estimate_(condition_estimate) {}

  double condition_estimate() const noexcept { return condition_estimate_; }

 private:
  double condition_estimate_;
};

}  // namespace hfda
