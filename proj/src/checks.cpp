#include "falsify/checks.hpp"

#include <cmath>
#include <functional>

#include <Eigen/Dense>

#include "falsify/kkt.hpp"

namespace falsify {

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kDerivativeTol = 1e-5;
constexpr double kRankTol = 1e-10;

double relative_error(const Matrix& approx, const Matrix& exact) {
  const double scale = std::max(exact.norm(), 1e-300);
  return (approx - exact).norm() / scale;
}

// Central differences of a vector-valued map, one column per coordinate.
Matrix central_jacobian(const std::function<Vector(const Vector&)>& f,
                        const Vector& x) {
  const Vector f0 = f(x);
  Matrix jac(x.size(), f0.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = kFdStep * std::max(1.0, std::abs(x[k]));
    Vector xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    jac.row(k) = ((f(xp) - f(xm)) / (2.0 * h)).transpose();
  }
  return jac;
}

CheckResult error_check(std::string name, double err, double tol) {
  return {std::move(name), err, tol, err < tol, {}};
}

CheckResult rank_check(ConstraintKind kind, const ProblemInstance& instance,
                       const ShootingVector& x, const SegmentFlows& flows) {
  static const char* names[] = {"rank_C1", "rank_C2", "rank_C3"};
  CheckResult r{names[static_cast<int>(kind)], 0.0, kRankTol, false, {}};
  const Matrix b(constraint_jacobian(kind, instance, x, flows));
  if (b.cols() == 0) {
    r.value = INFINITY;
    r.passed = true;
    r.detail = "no constraints";
    return r;
  }
  Eigen::JacobiSVD<Matrix> svd(b);
  r.value = svd.singularValues().tail(1)[0];
  r.passed = r.value > kRankTol;
  if (!r.passed) r.detail = "Jacobian is rank deficient";
  return r;
}

}  // namespace

std::vector<CheckResult> run_checks(const Formulation& formulation,
                                    const ProblemInstance& instance,
                                    const ShootingVector& x,
                                    double fd_tolerance) {
  IntegratorConfig tight;
  tight.rel_tol = fd_tolerance;
  tight.abs_tol = fd_tolerance;
  const int n = x.dim();
  const int N = x.segments();
  const ConstraintKind kind = formulation.constraints();
  const int m = constraint_dimension(kind, n, N);

  const auto at = [&](const Vector& p) {
    return ShootingVector::from_packed(p, n, N);
  };
  const auto plain = [&](const Vector& p) {
    return evaluate_segments(instance, at(p), tight, false);
  };

  const SegmentFlows flows = evaluate_segments(instance, x, tight, true);
  const Vector p0 = x.packed();

  // Fixed, nonzero multipliers so every column of B contributes.
  Vector lambda(m);
  for (int j = 0; j < m; ++j) lambda[j] = 0.3 + 0.1 * ((j % 7) - 3);

  std::vector<CheckResult> out;

  const Vector grad = objective_gradient(formulation, instance, x, flows);
  const Matrix grad_fd = central_jacobian(
      [&](const Vector& p) {
        Vector v(1);
        v[0] = objective_value(formulation, instance, at(p), plain(p));
        return v;
      },
      p0);
  out.push_back(error_check("objective_gradient_fd",
                            relative_error(grad_fd.col(0), grad),
                            kDerivativeTol));

  if (m > 0) {
    const Matrix b(constraint_jacobian(kind, instance, x, flows));
    const Matrix b_fd = central_jacobian(
        [&](const Vector& p) {
          return constraint_value(kind, instance, at(p), plain(p));
        },
        p0);
    out.push_back(error_check("constraint_jacobian_fd",
                              relative_error(b_fd, b), kDerivativeTol));
  }

  const Vector grad_l =
      lagrangian_gradient(formulation, instance, x, lambda, flows);
  const Matrix grad_l_fd = central_jacobian(
      [&](const Vector& p) {
        const SegmentFlows f = plain(p);
        Vector v(1);
        v[0] = objective_value(formulation, instance, at(p), f);
        if (m > 0) v[0] += lambda.dot(constraint_value(kind, instance, at(p), f));
        return v;
      },
      p0);
  out.push_back(error_check("lagrangian_gradient_fd",
                            relative_error(grad_l_fd.col(0), grad_l),
                            kDerivativeTol));

  if (N >= 2) {
    if (const auto closed = lagrangian_gradient_closed_form(
            formulation, instance, x, lambda, flows))
      out.push_back(error_check("lagrangian_closed_form",
                                relative_error(*closed, grad_l), 1e-10));
  }

  for (ConstraintKind k :
       {ConstraintKind::C1, ConstraintKind::C2, ConstraintKind::C3})
    out.push_back(rank_check(k, instance, x, flows));

  // Both KKT solvers on the first SQP system (H = I, lambda = 0).
  CheckResult agree{"ppcg_vs_direct", 0.0, 1e-8, false, {}};
  try {
    const HessianApprox h =
        HessianApprox::identity(HessianVariant::BlockDiagonal, n, N);
    const SaddleSystem sys{
        &h, constraint_jacobian(kind, instance, x, flows),
        -objective_gradient(formulation, instance, x, flows),
        -constraint_value(kind, instance, x, flows)};
    const KktSolution a = solve_ppcg(sys);
    const KktSolution d = solve_direct(sys);
    agree.value = relative_error(a.d_x, d.d_x);
    agree.passed = a.converged && agree.value < agree.tolerance;
    if (!a.converged) agree.detail = "projected CG did not converge";
  } catch (const std::exception& e) {
    agree.value = INFINITY;
    agree.detail = e.what();
  }
  out.push_back(agree);
  return out;
}

}  // namespace falsify
