#pragma once

#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace falsify {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Right-hand side f(t, x) of an autonomous or non-autonomous ODE.
using RhsFunction = std::function<Vector(double, const Vector&)>;
/// State Jacobian df/dx evaluated at (t, x).
using JacobianFunction = std::function<Matrix(double, const Vector&)>;

/// Thrown when the adaptive stepper gives up: step budget exhausted, step
/// size underflow, or a non-finite state.
class IntegrationFailure : public std::runtime_error {
 public:
  explicit IntegrationFailure(const std::string& what)
      : std::runtime_error(what) {}
};

/// dx/dt = f(t, x) together with its state Jacobian.
///
/// Instances are immutable after construction and may be shared between
/// concurrent solver runs.
class OdeSystem {
 public:
  OdeSystem(int dim, RhsFunction rhs, JacobianFunction jacobian,
            std::string label);

  int dim() const { return dim_; }
  const std::string& label() const { return label_; }

  Vector rhs(double t, const Vector& x) const { return rhs_(t, x); }
  Matrix state_jacobian(double t, const Vector& x) const {
    return jacobian_(t, x);
  }

 private:
  int dim_;
  RhsFunction rhs_;
  JacobianFunction jacobian_;
  std::string label_;
};

struct IntegratorConfig {
  double rel_tol = 1e-9;
  double abs_tol = 1e-9;
  int max_steps = 100000;

  /// Throws std::invalid_argument on non-positive tolerances or step budget.
  void validate() const;
};

/// Endpoint of one segment integration with its first-order sensitivities.
struct FlowResult {
  Vector end_state;       // Phi(t, x0)
  Matrix sensitivity;     // S(t, x0) = dPhi/dx0
  Vector end_derivative;  // dPhi/dt = f(t, Phi(t, x0))
};

/// Phi(duration, x0) with the segment starting at t = 0. Negative durations
/// integrate backward in time; a zero duration returns x0 unchanged.
Vector flow(const OdeSystem& system, const Vector& x0, double duration,
            const IntegratorConfig& cfg = {});

/// Integrates the state together with the variational equations
/// dS/dt = (df/dx)(t, x(t)) S, S(0) = I, as one augmented system of
/// dimension n + n^2.
FlowResult flow_with_sensitivity(const OdeSystem& system, const Vector& x0,
                                 double duration,
                                 const IntegratorConfig& cfg = {});

/// Rotation-plus-sine system: dx/dt = A x + sin(reverse(x)), with A the
/// block-diagonal matrix of 2x2 blocks [[0, 1], [-1, 0]]. `n` must be even.
OdeSystem benchmark1(int n);

/// Three-state nonlinear system
///   x1' = -x2 + x1 x3
///   x2' =  x1 + x2 x3
///   x3' = -x3 - x1^2 - x2^2 + x3^2
OdeSystem benchmark2();

/// Linear rotation system dx/dt = A x with the same A as benchmark1.
OdeSystem benchmark3(int n);

/// The block-rotation matrix shared by benchmark1 and benchmark3.
Matrix block_rotation_matrix(int n);

}  // namespace falsify
