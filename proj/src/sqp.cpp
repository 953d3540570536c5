#include "falsify/sqp.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include <Eigen/Dense>
#include <json.hpp>

namespace falsify {

KktMethod kkt_method_from_name(const std::string& name) {
  if (name == "ppcg") return KktMethod::Ppcg;
  if (name == "direct") return KktMethod::Direct;
  throw std::invalid_argument("unknown kkt method '" + name +
                              "' (expected ppcg or direct)");
}

std::string to_string(KktMethod m) {
  return m == KktMethod::Ppcg ? "ppcg" : "direct";
}

void SqpConfig::validate() const {
  if (!(omega >= 0.0)) throw std::invalid_argument("SqpConfig: omega < 0");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("SqpConfig: delta must lie in (0, 1)");
  if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0))
    throw std::invalid_argument("SqpConfig: backtrack_factor must lie in (0, 1)");
  if (!(eps1 > 0.0 && eps2 > 0.0 && eps3 > 0.0))
    throw std::invalid_argument("SqpConfig: tolerances must be positive");
  if (max_iter < 0) throw std::invalid_argument("SqpConfig: max_iter < 0");
  integrator.validate();
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::S1Converged: return "S1_converged";
    case Termination::S2MaxIter: return "S2_maxit";
    case Termination::S3StepTooSmall: return "S3_step_too_small";
    case Termination::IntegrationFailure: return "IntegrationFailure";
  }
  return "?";
}

std::string status_digit(Termination t) {
  switch (t) {
    case Termination::S1Converged: return "1";
    case Termination::S2MaxIter: return "2";
    case Termination::S3StepTooSmall: return "3";
    case Termination::IntegrationFailure: return "F";
  }
  return "F";
}

PointEvaluation evaluate_point(const Formulation& formulation,
                               const ProblemInstance& instance,
                               const ShootingVector& x,
                               const IntegratorConfig& cfg,
                               bool with_derivatives) {
  PointEvaluation ev{x, evaluate_segments(instance, x, cfg, with_derivatives),
                     0.0, {}, {}, {}};
  ev.objective = objective_value(formulation, instance, x, ev.flows);
  ev.constraints =
      constraint_value(formulation.constraints(), instance, x, ev.flows);
  if (with_derivatives) {
    ev.objective_gradient =
        objective_gradient(formulation, instance, x, ev.flows);
    ev.jacobian =
        constraint_jacobian(formulation.constraints(), instance, x, ev.flows);
  }
  return ev;
}

double merit_value(double objective, const Vector& constraints,
                   const Vector& lambda, const Vector& d_lambda, double omega) {
  if (constraints.size() == 0) return objective;
  return objective + (lambda + d_lambda).dot(constraints) +
         0.5 * omega * constraints.squaredNorm();
}

double merit(const Formulation& formulation, const ProblemInstance& instance,
             const ShootingVector& x, const Vector& lambda, const Vector& d_x,
             const Vector& d_lambda, double alpha, double omega,
             const IntegratorConfig& cfg) {
  const ShootingVector trial = ShootingVector::from_packed(
      x.packed() + alpha * d_x, x.dim(), x.segments());
  try {
    const PointEvaluation ev =
        evaluate_point(formulation, instance, trial, cfg, false);
    const double m =
        merit_value(ev.objective, ev.constraints, lambda, d_lambda, omega);
    return std::isfinite(m) ? m : std::numeric_limits<double>::infinity();
  } catch (const IntegrationFailure&) {
    return std::numeric_limits<double>::infinity();
  }
}

double merit_derivative_at_zero(const Vector& objective_gradient,
                                const SparseMatrix& jacobian,
                                const Vector& constraints, const Vector& lambda,
                                const Vector& d_x, const Vector& d_lambda,
                                double omega) {
  if (constraints.size() == 0) return d_x.dot(objective_gradient);
  const Vector bt_dx = jacobian.transpose() * d_x;
  return d_x.dot(objective_gradient) + bt_dx.dot(lambda + d_lambda) +
         omega * bt_dx.dot(constraints);
}

LineSearchResult line_search(const MeritFunction& m, double m0, double dm0,
                             const SqpConfig& cfg, double alpha0) {
  LineSearchResult res;
  if (!(dm0 < 0.0)) return res;
  for (double alpha = alpha0; alpha >= cfg.eps3;
       alpha *= cfg.backtrack_factor) {
    const double ma = m(alpha);
    ++res.trials;
    if (ma - m0 <= cfg.delta * alpha * dm0) {
      res.accepted = true;
      res.alpha = alpha;
      res.merit_at_alpha = ma;
      return res;
    }
  }
  return res;
}

namespace {

struct StepSolve {
  KktSolution sol;
  std::string solver;
  double alpha0 = 1.0;
};

// PPCG -> dense direct -> minimum-norm least squares with a halved first
// trial step.
StepSolve solve_step(const SaddleSystem& sys, const SqpConfig& cfg) {
  if (cfg.kkt_method == KktMethod::Ppcg) {
    try {
      KktSolution s = solve_ppcg(sys, cfg.ppcg);
      if (s.converged) return {std::move(s), "ppcg", 1.0};
    } catch (const Breakdown&) {
    } catch (const PreconditionerSingular&) {
    }
  }
  try {
    return {solve_direct(sys), "direct", 1.0};
  } catch (const SingularSystem&) {
  }
  const Matrix k = sys.assemble_dense();
  Vector rhs(sys.m1() + sys.m2());
  rhs << sys.rhs_top, sys.rhs_bottom;
  const Vector z = k.completeOrthogonalDecomposition().solve(rhs);
  KktSolution s;
  s.d_x = z.head(sys.m1());
  s.d_lambda = z.tail(sys.m2());
  s.residual_norm = sys.residual_norm(s.d_x, s.d_lambda);
  return {std::move(s), "lstsq", 0.5};
}

Vector lagrangian_gradient_of(const PointEvaluation& ev, const Vector& lambda) {
  Vector g = ev.objective_gradient;
  if (lambda.size() > 0) g += ev.jacobian * lambda;
  return g;
}

}  // namespace

RunReport run_sqp(const Formulation& formulation,
                  const ProblemInstance& instance,
                  const ShootingVector& x_init, const SqpConfig& cfg) {
  cfg.validate();
  if (x_init.dim() != instance.dim())
    throw std::invalid_argument("run_sqp: initial guess dimension mismatch");
  const int n = x_init.dim();
  const int N = x_init.segments();
  const int m = constraint_dimension(formulation.constraints(), n, N);

  RunReport report;
  report.final_x = x_init;
  Vector lambda = Vector::Zero(m);
  HessianApprox hess =
      HessianApprox::identity(cfg.hessian_variant, n, N);

  std::optional<PointEvaluation> cur;
  try {
    cur = evaluate_point(formulation, instance, x_init, cfg.integrator, true);
  } catch (const IntegrationFailure& e) {
    report.termination = Termination::IntegrationFailure;
    report.message = e.what();
    report.final_lambda = lambda;
    return report;
  }
  Vector grad_l = lagrangian_gradient_of(*cur, lambda);

  int iter = 0;
  for (;;) {
    const double c_norm = cur->constraints.norm();
    const double g_norm = grad_l.norm();
    if (g_norm < cfg.eps1 && c_norm < cfg.eps2) {
      report.termination = Termination::S1Converged;
      break;
    }
    if (iter >= cfg.max_iter) {
      report.termination = Termination::S2MaxIter;
      break;
    }

    SaddleSystem sys{&hess, cur->jacobian, -grad_l, -cur->constraints};
    if (cfg.kkt_observer) cfg.kkt_observer(sys);
    const StepSolve step = solve_step(sys, cfg);
    const Vector& d_x = step.sol.d_x;
    const Vector& d_lambda = step.sol.d_lambda;

    IterationRecord rec;
    rec.iter = iter;
    rec.objective = cur->objective;
    rec.constraint_norm = c_norm;
    rec.lagrangian_gradient_norm = g_norm;
    rec.cg_iterations = step.sol.cg_iterations;
    rec.solver = step.solver;

    // A feasible point whose only defect was the multiplier estimate: take
    // the full multiplier step and stop without moving X.
    if (m > 0 && c_norm < cfg.eps2) {
      const Vector trial_grad = lagrangian_gradient_of(*cur, lambda + d_lambda);
      if (trial_grad.norm() < cfg.eps1) {
        lambda += d_lambda;
        grad_l = trial_grad;
        rec.alpha = 0.0;
        report.trace.push_back(rec);
        ++iter;
        report.termination = Termination::S1Converged;
        break;
      }
    }

    const auto merit_at = [&](double alpha) {
      return merit(formulation, instance, cur->x, lambda, d_x, d_lambda, alpha,
                   cfg.omega, cfg.integrator);
    };
    const double m0 = merit_at(0.0);
    const double dm0 =
        merit_derivative_at_zero(cur->objective_gradient, cur->jacobian,
                                 cur->constraints, lambda, d_x, d_lambda,
                                 cfg.omega);
    rec.merit0 = m0;
    rec.merit_slope = dm0;

    const LineSearchResult ls =
        line_search(merit_at, m0, dm0, cfg, step.alpha0);
    if (!ls.accepted) {
      report.termination = Termination::S3StepTooSmall;
      report.message = dm0 >= 0.0 ? "merit slope m'(0) is not negative"
                                  : "step length fell below eps3";
      break;
    }
    rec.alpha = ls.alpha;
    rec.merit = ls.merit_at_alpha;

    const Vector s = ls.alpha * d_x;
    const Vector lambda_new = lambda + ls.alpha * d_lambda;
    const ShootingVector x_new = ShootingVector::from_packed(
        cur->x.packed() + s, n, N);
    std::optional<PointEvaluation> next;
    try {
      next = evaluate_point(formulation, instance, x_new, cfg.integrator, true);
    } catch (const IntegrationFailure& e) {
      report.termination = Termination::IntegrationFailure;
      report.message = e.what();
      report.trace.push_back(rec);
      ++iter;
      break;
    }

    const Vector y = lagrangian_gradient_of(*next, lambda_new) -
                     lagrangian_gradient_of(*cur, lambda_new);
    const auto stats = hess.update(s, y);
    rec.hessian_skips = stats.skipped;
    report.trace.push_back(rec);

    cur = std::move(*next);
    lambda = lambda_new;
    grad_l = lagrangian_gradient_of(*cur, lambda);
    ++iter;
  }

  report.nit = iter;
  report.final_x = cur->x;
  report.final_lambda = lambda;
  report.final_objective = cur->objective;
  report.final_constraint_norm = cur->constraints.norm();
  report.final_lagrangian_gradient_norm = grad_l.norm();
  report.hessian_skips = hess.skip_count();
  return report;
}

void write_trace(std::ostream& out, const std::vector<IterationRecord>& trace) {
  for (const auto& r : trace) {
    nlohmann::json j = {{"iter", r.iter},
                        {"F", r.objective},
                        {"c_norm", r.constraint_norm},
                        {"gradL_norm", r.lagrangian_gradient_norm},
                        {"alpha", r.alpha},
                        {"merit", r.merit},
                        {"merit0", r.merit0},
                        {"merit_slope", r.merit_slope},
                        {"cg_iterations", r.cg_iterations},
                        {"solver", r.solver}};
    out << j.dump() << '\n';
  }
}

}  // namespace falsify
