#pragma once

#include <string>
#include <vector>

#include "falsify/formulation.hpp"

namespace falsify {

/// Outcome of one self-check. For error checks `value` is a relative error
/// that must stay below `tolerance`; for rank checks it is the smallest
/// singular value, which must stay above it.
struct CheckResult {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
};

/// Finite-difference, closed-form, rank and solver cross-checks at `x`.
/// Derivatives are compared with all integrations run at `fd_tolerance`.
std::vector<CheckResult> run_checks(const Formulation& formulation,
                                    const ProblemInstance& instance,
                                    const ShootingVector& x,
                                    double fd_tolerance = 1e-12);

}  // namespace falsify
