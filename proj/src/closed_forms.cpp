// Row-by-row Lagrangian gradients for the regularized formulations. This file
// deliberately does not call objective_gradient or constraint_jacobian: it is
// the second route that the generic grad F + B lambda is checked against.

#include <stdexcept>

#include "falsify/formulation.hpp"

namespace falsify {

namespace {

struct Pieces {
  int n;
  int N;
  std::vector<Vector> r;   // matching residuals r_i = x0^{i+1} - Phi_i
  Vector init_grad;        // E_I (x0^1 - c_I)
  Vector unsafe_w;         // E_U (Phi_N - c_U)
  Vector t;                // durations
};

Pieces gather(const ProblemInstance& inst, const ShootingVector& x,
              const SegmentFlows& flows) {
  Pieces p;
  p.n = x.dim();
  p.N = x.segments();
  for (int i = 0; i + 1 < p.N; ++i)
    p.r.push_back(x.start(i + 1) - flows[i].end_state);
  p.init_grad = inst.init.shape * (x.start(0) - inst.init.center);
  p.unsafe_w =
      inst.unsafe_set.shape * (flows[p.N - 1].end_state - inst.unsafe_set.center);
  p.t = x.durations();
  return p;
}

// The "time-only" leading term of each t_i row, by regularizer.
double time_term(Regularizer reg, const Vector& t, int i) {
  const int N = static_cast<int>(t.size());
  switch (reg) {
    case Regularizer::R1: return t[i];
    case Regularizer::R3: return t[i] - t.mean();
    case Regularizer::R2:
      if (i == 0) return -(t[1] - t[0]);
      if (i == N - 1) return t[N - 1] - t[N - 2];
      return (t[i] - t[i - 1]) - (t[i + 1] - t[i]);
    case Regularizer::None: return 0.0;
  }
  return 0.0;
}

}  // namespace

std::optional<Vector> lagrangian_gradient_closed_form(
    const Formulation& formulation, const ProblemInstance& instance,
    const ShootingVector& x, const Vector& lambda, const SegmentFlows& flows) {
  const int eq = formulation.equation();
  if (eq < 8 || eq > 13) return std::nullopt;
  if (!flows.has_sensitivity)
    throw std::invalid_argument("closed form: flows lack sensitivities");
  if (x.segments() < 2)
    throw std::invalid_argument("closed form: needs at least two segments");
  const int m =
      constraint_dimension(formulation.constraints(), x.dim(), x.segments());
  if (lambda.size() != m)
    throw std::invalid_argument("closed form: multiplier length mismatch");

  const Pieces p = gather(instance, x, flows);
  const int n = p.n;
  const int N = p.N;
  Vector g(x.size());

  const auto S = [&](int i) -> const Matrix& { return flows[i].sensitivity; };
  const auto dphi = [&](int i) -> const Vector& {
    return flows[i].end_derivative;
  };

  if (eq == 8 || eq == 9) {
    // Multiplier-driven rows: lambda_i takes the place of the residual.
    const int shift = eq == 8 ? 1 : 0;
    const auto lam = [&](int i) -> Vector { return lambda.segment(shift + i * n, n); };
    const double lam_I = eq == 8 ? lambda[0] : 1.0;
    const double lam_U = eq == 8 ? lambda[m - 1] : 1.0;

    g.segment(x.offset(0), n) = lam_I * p.init_grad - S(0).transpose() * lam(0);
    for (int i = 0; i + 1 < N; ++i)
      g[x.offset(i) + n] = p.t[i] - dphi(i).dot(lam(i));
    for (int i = 1; i + 1 < N; ++i)
      g.segment(x.offset(i), n) = lam(i - 1) - S(i).transpose() * lam(i);
    g.segment(x.offset(N - 1), n) =
        lam(N - 2) + lam_U * S(N - 1).transpose() * p.unsafe_w;
    g[x.offset(N - 1) + n] = p.t[N - 1] + lam_U * dphi(N - 1).dot(p.unsafe_w);
    return g;
  }

  // Equations 10-13: residual-driven rows.
  const double lam_I = eq == 13 ? 1.0 : lambda[0];
  const double lam_U = eq == 13 ? 1.0 : lambda[1];
  const Regularizer reg = formulation.regularizer();

  g.segment(x.offset(0), n) = lam_I * p.init_grad - S(0).transpose() * p.r[0];
  for (int i = 0; i + 1 < N; ++i)
    g[x.offset(i) + n] = time_term(reg, p.t, i) - dphi(i).dot(p.r[i]);
  for (int i = 1; i + 1 < N; ++i)
    g.segment(x.offset(i), n) = p.r[i - 1] - S(i).transpose() * p.r[i];
  g.segment(x.offset(N - 1), n) =
      p.r[N - 2] + lam_U * S(N - 1).transpose() * p.unsafe_w;
  g[x.offset(N - 1) + n] =
      time_term(reg, p.t, N - 1) + lam_U * dphi(N - 1).dot(p.unsafe_w);
  return g;
}

}  // namespace falsify
