#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "falsify/formulation.hpp"
#include "falsify/hessian.hpp"
#include "falsify/kkt.hpp"

namespace falsify {

enum class KktMethod { Ppcg, Direct };

KktMethod kkt_method_from_name(const std::string& name);
std::string to_string(KktMethod m);

struct SqpConfig {
  double omega = 1.0;            // merit penalty weight
  double delta = 1e-4;           // sufficient decrease
  double eps1 = 1e-3;            // ||grad L|| tolerance
  double eps2 = 1e-8;            // ||c|| tolerance
  double eps3 = 1e-8;            // minimum step length
  int max_iter = 400;
  double backtrack_factor = 0.5;
  HessianVariant hessian_variant = HessianVariant::BlockDiagonal;
  KktMethod kkt_method = KktMethod::Ppcg;
  PpcgOptions ppcg;
  IntegratorConfig integrator;
  /// Called with every saddle-point system before it is solved (diagnostics,
  /// dumps). Must not retain the Hessian pointer past the call.
  std::function<void(const SaddleSystem&)> kkt_observer;

  void validate() const;
};

enum class Termination { S1Converged, S2MaxIter, S3StepTooSmall, IntegrationFailure };

std::string to_string(Termination t);
/// "1", "2", "3" for S1..S3; "F" for an integration failure.
std::string status_digit(Termination t);

/// Objective, constraints and their first derivatives at one point.
struct PointEvaluation {
  ShootingVector x;
  SegmentFlows flows;
  double objective = 0.0;
  Vector constraints;
  Vector objective_gradient;  // empty unless with_derivatives
  SparseMatrix jacobian;      // empty unless with_derivatives
};

PointEvaluation evaluate_point(const Formulation& formulation,
                               const ProblemInstance& instance,
                               const ShootingVector& x,
                               const IntegratorConfig& cfg,
                               bool with_derivatives);

/// Merit value F + (lambda + d_lambda)^T c + (omega / 2) ||c||^2 at a point
/// whose objective and constraints are already known.
double merit_value(double objective, const Vector& constraints,
                   const Vector& lambda, const Vector& d_lambda, double omega);

/// m(alpha) = F(X + alpha d_x) + (lambda + d_lambda)^T c(X + alpha d_x)
///            + (omega / 2) ||c(X + alpha d_x)||^2.
/// An integration failure at the trial point yields +infinity.
double merit(const Formulation& formulation, const ProblemInstance& instance,
             const ShootingVector& x, const Vector& lambda, const Vector& d_x,
             const Vector& d_lambda, double alpha, double omega,
             const IntegratorConfig& cfg);

/// m'(0) = d_x^T (grad F + B (lambda + d_lambda)) + omega d_x^T B c.
double merit_derivative_at_zero(const Vector& objective_gradient,
                                const SparseMatrix& jacobian,
                                const Vector& constraints, const Vector& lambda,
                                const Vector& d_x, const Vector& d_lambda,
                                double omega);

/// Evaluates m(alpha) for a trial step size.
using MeritFunction = std::function<double(double)>;

struct LineSearchResult {
  bool accepted = false;  // false: step too small (or m'(0) >= 0)
  double alpha = 0.0;
  double merit_at_alpha = 0.0;
  int trials = 0;
};

/// Backtracking from alpha0 by `backtrack_factor` until
/// m(alpha) - m(0) <= delta alpha m'(0). Gives up when alpha < eps3 or when
/// m'(0) >= 0.
LineSearchResult line_search(const MeritFunction& m, double m0, double dm0,
                             const SqpConfig& cfg, double alpha0 = 1.0);

struct IterationRecord {
  int iter = 0;
  double objective = 0.0;
  double constraint_norm = 0.0;
  double lagrangian_gradient_norm = 0.0;
  double alpha = 0.0;
  double merit0 = 0.0;
  double merit = 0.0;      // m(alpha) at the accepted step
  double merit_slope = 0.0;  // m'(0)
  int cg_iterations = 0;
  std::string solver;      // "ppcg", "direct" or "lstsq"
  int hessian_skips = 0;
};

struct RunReport {
  int nit = 0;
  Termination termination = Termination::S2MaxIter;
  ShootingVector final_x{1, 1};
  Vector final_lambda;
  double final_objective = 0.0;
  double final_constraint_norm = 0.0;
  double final_lagrangian_gradient_norm = 0.0;
  int hessian_skips = 0;
  std::string message;
  std::vector<IterationRecord> trace;
};

/// Line-search SQP from `x_init` with lambda = 0 and H = I.
RunReport run_sqp(const Formulation& formulation,
                  const ProblemInstance& instance,
                  const ShootingVector& x_init, const SqpConfig& cfg);

/// One JSON object per line with iter, F, c_norm, gradL_norm, alpha, merit
/// and cg_iterations.
void write_trace(std::ostream& out, const std::vector<IterationRecord>& trace);

}  // namespace falsify
