#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace boatmatch {

// Malformed input files, bad configuration, violated preconditions.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 1:1 matching without replacement needs at least as many controls as treated.
class MatchingInfeasible : public std::runtime_error {
 public:
  MatchingInfeasible(std::size_t n_control, std::size_t n_treated)
      : std::runtime_error("cannot 1:1 match without replacement: " +
                           std::to_string(n_control) + " controls < " +
                           std::to_string(n_treated) + " treated"),
        n_control_(n_control),
        n_treated_(n_treated) {}

  std::size_t n_control() const { return n_control_; }
  std::size_t n_treated() const { return n_treated_; }

 private:
  std::size_t n_control_;
  std::size_t n_treated_;
};

// Variational optimisation produced a non-finite loss.
class VIDivergence : public std::runtime_error {
 public:
  explicit VIDivergence(std::size_t step)
      : std::runtime_error("variational loss became non-finite at step " +
                           std::to_string(step)),
        step_(step) {}

  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

}  // namespace boatmatch
