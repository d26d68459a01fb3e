#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gsvie {

/// Control lattice would exceed the configured size cap.
class OversizeLatticeError : public std::length_error {
 public:
  OversizeLatticeError(std::size_t requested, std::size_t cap)
      : std::length_error("control lattice of " + std::to_string(requested) +
                          " controls exceeds the cap of " + std::to_string(cap)),
        requested_(requested),
        cap_(cap) {}
  std::size_t requested() const noexcept { return requested_; }
  std::size_t cap() const noexcept { return cap_; }

 private:
  std::size_t requested_;
  std::size_t cap_;
};

/// Ensemble storage estimate exceeds the memory budget.
class MemoryBudgetError : public std::length_error {
 public:
  MemoryBudgetError(std::size_t bytes, std::size_t budget)
      : std::length_error("ensemble needs " + std::to_string(bytes) + " bytes, budget is " +
                          std::to_string(budget) + " bytes") {}
};

/// A payoff or coefficient produced NaN or infinity.
class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace gsvie
