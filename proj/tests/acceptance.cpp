// Acceptance suite: one PASS/FAIL line per criterion.

#include <chrono>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <Eigen/Cholesky>

#include "falsify/bench.hpp"
#include "falsify/kkt.hpp"
#include "oracles.hpp"

using namespace falsify;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << v;
  return s.str();
}

ShootingVector perturbed_guess(std::mt19937& rng, const ProblemInstance& inst,
                               int N, double spread = 0.2) {
  ShootingVector x = initial_guess(inst, N);
  x.packed() += oracle::random_vector(rng, x.size(), -spread, spread);
  return x;
}

// 1. Objective gradients, constraint Jacobians and Lagrangian gradients
// against central differences for every formulation.
Outcome derivative_consistency() {
  std::mt19937 rng(101);
  const IntegratorConfig cfg = oracle::tight();
  const auto inst = generate_instance(BenchmarkSystem::Benchmark2, 3, 5, 5.0,
                                      0.25, cfg);
  double worst_fd = 0.0, worst_closed = 0.0;
  int checks = 0;
  for (int eq = 5; eq <= 13; ++eq) {
    const Formulation form = Formulation::by_equation(eq);
    const ConstraintKind kind = form.constraints();
    const int m = constraint_dimension(kind, 3, 5);
    for (int p = 0; p < 20; ++p) {
      const ShootingVector x = perturbed_guess(rng, inst, 5);
      const Vector lambda = oracle::random_vector(rng, m);
      const SegmentFlows f = evaluate_segments(inst, x, cfg);
      const auto plain = [&](const Vector& q) {
        const ShootingVector xq = unpack(q, 3, 5);
        return std::make_pair(xq, evaluate_segments(inst, xq, cfg, false));
      };

      const Vector g_fd = oracle::central_gradient(
          [&](const Vector& q) {
            const auto [xq, fq] = plain(q);
            return objective_value(form, inst, xq, fq);
          },
          x.packed());
      worst_fd = std::max(worst_fd, oracle::rel_err(
                                        g_fd, objective_gradient(form, inst, x, f)));
      if (m > 0) {
        const Matrix b_fd = oracle::central_jacobian(
            [&](const Vector& q) {
              const auto [xq, fq] = plain(q);
              return constraint_value(kind, inst, xq, fq);
            },
            x.packed());
        worst_fd = std::max(
            worst_fd,
            oracle::rel_err(b_fd, Matrix(constraint_jacobian(kind, inst, x, f))));
      }
      const Vector l_fd = oracle::central_gradient(
          [&](const Vector& q) {
            const auto [xq, fq] = plain(q);
            double v = objective_value(form, inst, xq, fq);
            if (m > 0) v += lambda.dot(constraint_value(kind, inst, xq, fq));
            return v;
          },
          x.packed());
      const Vector l = lagrangian_gradient(form, inst, x, lambda, f);
      worst_fd = std::max(worst_fd, oracle::rel_err(l_fd, l));
      if (const auto closed =
              lagrangian_gradient_closed_form(form, inst, x, lambda, f)) {
        worst_closed = std::max(worst_closed, oracle::rel_err(*closed, l));
        worst_closed = std::max(worst_closed, oracle::rel_err(*closed, l_fd));
      }
      ++checks;
    }
  }
  return {worst_fd < 1e-5 && worst_closed < 1e-5,
          std::to_string(checks) + " points over eq5..eq13, max FD rel err " +
              fmt(worst_fd) + ", max closed-form rel err " + fmt(worst_closed)};
}

// 2. benchmark3 flow and sensitivity against exp(A t).
Outcome closed_form_flow() {
  std::mt19937 rng(102);
  double worst = 0.0;
  for (int n : {2, 4, 10}) {
    const OdeSystem s = benchmark3(n);
    for (int k = 0; k <= 40; ++k) {
      const double t = -5.0 + 0.25 * k;
      const Vector x0 = oracle::random_vector(rng, n);
      const FlowResult r = flow_with_sensitivity(s, x0, t);
      const Matrix e = oracle::rotation_exp(n, t);
      worst = std::max(worst, (r.end_state - e * x0).lpNorm<Eigen::Infinity>());
      worst = std::max(worst, (r.sensitivity - e).lpNorm<Eigen::Infinity>());
    }
  }
  return {worst < 1e-7, "n in {2,4,10}, t in [-5,5], max abs err " + fmt(worst)};
}

// 3. Rank of the constraint Jacobians.
Outcome rank_properties() {
  std::mt19937 rng(103);
  const auto inst = generate_instance(BenchmarkSystem::Benchmark2, 3, 5);
  double c1_min = INFINITY, c23_min = INFINITY, rigged_max = 0.0;
  int instances = 0;
  for (int N : {2, 5, 10}) {
    const int count = N == 10 ? 34 : 33;
    for (int k = 0; k < count; ++k, ++instances) {
      const ShootingVector x = perturbed_guess(rng, inst, N, 0.3);
      const SegmentFlows f = evaluate_segments(inst, x, {});
      c1_min = std::min(c1_min, oracle::smallest_singular_value(Matrix(
                                    constraint_jacobian(ConstraintKind::C1, inst, x, f))));
      for (ConstraintKind kind : {ConstraintKind::C2, ConstraintKind::C3})
        c23_min = std::min(c23_min, oracle::smallest_singular_value(Matrix(
                                        constraint_jacobian(kind, inst, x, f))));
    }
    // x0^1 = c_I: the Init column vanishes.
    ShootingVector centred = perturbed_guess(rng, inst, N, 0.3);
    centred.set_start(0, inst.init.center);
    const SegmentFlows fc = evaluate_segments(inst, centred, {});
    // Endpoint at c_U: the terminal scalar and the whole Unsafe column vanish.
    const ShootingVector x = perturbed_guess(rng, inst, N, 0.3);
    const SegmentFlows fx = evaluate_segments(inst, x, {});
    const auto at_unsafe_centre = ProblemInstance::make(
        inst.system, inst.init, Ellipsoid::ball(fx[N - 1].end_state, 0.25), N);
    for (ConstraintKind kind : {ConstraintKind::C2, ConstraintKind::C3}) {
      rigged_max = std::max(rigged_max, oracle::smallest_singular_value(Matrix(
                                            constraint_jacobian(kind, inst, centred, fc))));
      rigged_max = std::max(
          rigged_max, oracle::smallest_singular_value(Matrix(constraint_jacobian(
                          kind, at_unsafe_centre, x, fx))));
    }
  }
  return {c1_min > 1e-10 && c23_min > 1e-10 && rigged_max < 1e-12,
          std::to_string(instances) + " instances: min sigma C1 " + fmt(c1_min) +
              ", C2/C3 " + fmt(c23_min) + "; rigged C2/C3 max sigma " +
              fmt(rigged_max)};
}

// 4. PPCG against the dense oracle on systems from real SQP iterations.
Outcome kkt_equivalence() {
  struct Captured {
    HessianApprox h;
    SparseMatrix b;
    Vector top, bottom;
  };
  std::vector<Captured> systems;
  const auto harvest = [&](BenchmarkSystem sys, int n, int N, int eq) {
    const auto inst = generate_instance(sys, n, N);
    SqpConfig cfg;
    cfg.kkt_observer = [&](const SaddleSystem& s) {
      if (systems.size() < 50)
        systems.push_back({*s.hess, s.jac, s.rhs_top, s.rhs_bottom});
    };
    run_sqp(Formulation::by_equation(eq), inst, initial_guess(inst, N), cfg);
  };
  harvest(BenchmarkSystem::Benchmark2, 3, 5, 8);
  harvest(BenchmarkSystem::Benchmark2, 3, 10, 9);
  harvest(BenchmarkSystem::Benchmark2, 3, 10, 8);

  double worst = 0.0, drift = 0.0;
  int unconverged = 0;
  for (const auto& c : systems) {
    const SaddleSystem sys{&c.h, c.b, c.top, c.bottom};
    const KktSolution a = solve_ppcg(sys);
    const KktSolution d = solve_direct(sys);
    if (!a.converged) ++unconverged;
    worst = std::max(worst, oracle::rel_err(a.d_x, d.d_x));
    drift = std::max(drift, a.max_constraint_drift);
  }
  return {systems.size() == 50 && unconverged == 0 && worst < 1e-7 &&
              drift < 1e-12,
          std::to_string(systems.size()) + " systems: max d_x rel diff " +
              fmt(worst) + ", max constraint drift " + fmt(drift)};
}

// 5. Structured BFGS.
Outcome structured_bfgs() {
  std::mt19937 rng(105);
  const auto spd = [](const Matrix& m) {
    return Eigen::LLT<Matrix>(m).info() == Eigen::Success;
  };

  double literal_err = 0.0;
  {
    auto h = HessianApprox::identity(HessianVariant::FullDense, 3, 4);
    for (int k = 0; k < 50; ++k) {
      const Vector s = oracle::random_vector(rng, 16);
      const Vector y = s.cwiseProduct(oracle::random_vector(rng, 16, 0.5, 2.0));
      const Matrix expect = oracle::literal_bfgs(h.to_dense(), s, y);
      h.update(s, y);
      literal_err = std::max(
          literal_err, (h.to_dense() - expect).lpNorm<Eigen::Infinity>() /
                           std::max(1.0, expect.lpNorm<Eigen::Infinity>()));
    }
  }

  bool pattern = true, blocks_spd = true;
  int skips = 0;
  const int n = 3, N = 5, size = N * (n + 1);
  Matrix a(size, size);
  for (int j = 0; j < size; ++j) a.col(j) = oracle::random_vector(rng, size);
  const Matrix m = a * a.transpose() + 0.5 * Matrix::Identity(size, size);
  for (HessianVariant v : {HessianVariant::BlockDiagonal, HessianVariant::Banded}) {
    auto h = HessianApprox::identity(v, n, N);
    for (int k = 0; k < 50; ++k) {
      const Vector s = oracle::random_vector(rng, size);
      h.update(s, (k % 5 == 4 ? -1.0 : 1.0) * (m * s));
      const Matrix d = h.to_dense();
      for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
          const int bi = i / (n + 1), bj = j / (n + 1);
          const bool inside = v == HessianVariant::BlockDiagonal
                                  ? bi == bj
                                  : std::abs(bi - bj) <= 1;
          if (!inside && d(i, j) != 0.0) pattern = false;
        }
      for (int e = 0; e < h.element_count(); ++e)
        blocks_spd = blocks_spd && spd(h.element(e));
      blocks_spd = blocks_spd && spd(d);
    }
    skips += h.skip_count();
  }

  bool bitwise = true;
  for (HessianVariant v : {HessianVariant::FullDense, HessianVariant::BlockDiagonal,
                           HessianVariant::Banded}) {
    auto h = HessianApprox::identity(v, 2, 3);
    const Vector s0 = oracle::random_vector(rng, 9);
    h.update(s0, 2.0 * s0);
    const Matrix before = h.to_dense();
    const Vector s = oracle::random_vector(rng, 9);
    const auto stats = h.update(s, -s);
    const Matrix after = h.to_dense();
    bitwise = bitwise && stats.applied == 0 &&
              std::memcmp(before.data(), after.data(),
                          sizeof(double) * before.size()) == 0;
  }
  return {literal_err < 1e-14 && pattern && blocks_spd && bitwise,
          "literal formula max err " + fmt(literal_err) + ", pattern " +
              (pattern ? "exact" : "broken") + ", per-block SPD " +
              (blocks_spd ? "yes" : "no") + " (" + std::to_string(skips) +
              " skips), skipped update bitwise " +
              (bitwise ? "unchanged" : "changed")};
}

// 6. Merit acceptance and slope.
Outcome merit_contract() {
  int runs = 0, steps = 0, violations = 0;
  const SqpConfig cfg;
  const auto audit = [&](BenchmarkSystem sys, int n, int N, int eq,
                         HessianVariant hv) {
    const auto inst = generate_instance(sys, n, N);
    SqpConfig c = cfg;
    c.hessian_variant = hv;
    const RunReport r =
        run_sqp(Formulation::by_equation(eq), inst, initial_guess(inst, N), c);
    ++runs;
    for (const auto& rec : r.trace) {
      if (!(rec.alpha > 0.0)) continue;
      ++steps;
      if (!(rec.merit - rec.merit0 <= c.delta * rec.alpha * rec.merit_slope))
        ++violations;
    }
  };
  for (int eq = 5; eq <= 13; ++eq)
    audit(BenchmarkSystem::Benchmark2, 3, 5, eq, HessianVariant::BlockDiagonal);
  audit(BenchmarkSystem::Benchmark2, 3, 20, 11, HessianVariant::Banded);
  audit(BenchmarkSystem::Benchmark3, 4, 5, 8, HessianVariant::BlockDiagonal);
  audit(BenchmarkSystem::Benchmark1, 4, 5, 8, HessianVariant::FullDense);

  std::mt19937 rng(106);
  const IntegratorConfig tight = oracle::tight();
  const auto inst = generate_instance(BenchmarkSystem::Benchmark2, 3, 5);
  double worst = 0.0;
  for (int eq = 5; eq <= 13; ++eq) {
    const Formulation form = Formulation::by_equation(eq);
    const int m = constraint_dimension(form.constraints(), 3, 5);
    for (int k = 0; k < 3; ++k) {
      const ShootingVector x = perturbed_guess(rng, inst, 5);
      const PointEvaluation ev = evaluate_point(form, inst, x, tight, true);
      const Vector lambda = oracle::random_vector(rng, m);
      // Direction from the first KKT system at this point.
      const auto h = HessianApprox::identity(HessianVariant::BlockDiagonal, 3, 5);
      Vector g = ev.objective_gradient;
      if (m > 0) g += ev.jacobian * lambda;
      const KktSolution step =
          solve_direct({&h, ev.jacobian, -g, -ev.constraints});
      const double an = merit_derivative_at_zero(
          ev.objective_gradient, ev.jacobian, ev.constraints, lambda, step.d_x,
          step.d_lambda, 1.0);
      const double e = 1e-6;
      const double fd =
          (merit(form, inst, x, lambda, step.d_x, step.d_lambda, e, 1.0, tight) -
           merit(form, inst, x, lambda, step.d_x, step.d_lambda, -e, 1.0, tight)) /
          (2 * e);
      worst = std::max(worst, std::abs(fd - an) / std::abs(an));
    }
  }
  return {violations == 0 && worst < 1e-5,
          std::to_string(steps) + " accepted steps in " + std::to_string(runs) +
              " runs, " + std::to_string(violations) +
              " violations; m'(0) max FD rel err " + fmt(worst)};
}

// 7. End-to-end success and failure patterns.
Outcome end_to_end() {
  std::ostringstream detail;
  bool ok = true;
  double slowest = 0.0;
  const auto cell = [&](BenchmarkSystem sys, int n, int N, int eq,
                        HessianVariant hv, bool expect_verified) {
    BenchSpec spec;
    spec.system = sys;
    spec.formulation = Formulation::by_equation(eq);
    spec.sqp.hessian_variant = hv;
    const auto t0 = std::chrono::steady_clock::now();
    const BenchRow row = run_cell(spec, n, N);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    slowest = std::max(slowest, secs);
    const bool good = expect_verified ? row.verification.passed && row.status != "F"
                                      : row.status == "F";
    ok = ok && good && secs < 60.0;
    detail << (detail.tellp() > 0 ? " " : "") << to_string(sys).back() << "/"
           << "eq" << eq << "/n" << row.n << "/N" << N << "=" << row.status;
  };
  for (int n : {4, 10})
    for (int N : {5, 10})
      cell(BenchmarkSystem::Benchmark3, n, N, 8, HessianVariant::BlockDiagonal, true);
  for (int eq : {8, 9})
    for (int N : {5, 10})
      cell(BenchmarkSystem::Benchmark2, 3, N, eq, HessianVariant::BlockDiagonal, true);
  cell(BenchmarkSystem::Benchmark2, 3, 20, 11, HessianVariant::Banded, false);
  detail << "; slowest " << std::fixed << std::setprecision(2) << slowest << " s";
  return {ok, detail.str()};
}

// 8. eq10 closed form with all matching residuals zero.
Outcome degeneracy() {
  std::mt19937 rng(108);
  const auto inst = generate_instance(BenchmarkSystem::Benchmark2, 3, 6);
  const Formulation p10 = Formulation::by_equation(10);
  const IntegratorConfig cfg;
  int rows = 0, mismatches = 0;
  for (int k = 0; k < 20; ++k) {
    ShootingVector x = perturbed_guess(rng, inst, 6);
    for (int i = 0; i + 1 < 6; ++i)
      x.set_start(i + 1,
                  flow_with_sensitivity(inst.system, x.start(i), x.duration(i), cfg)
                      .end_state);
    const SegmentFlows f = evaluate_segments(inst, x, cfg);
    for (const auto& r : matching_residuals(x, f))
      if (r.norm() != 0.0) ++mismatches;
    const Vector g = *lagrangian_gradient_closed_form(
        p10, inst, x, oracle::random_vector(rng, 2), f);
    for (int i = 0; i + 1 < 6; ++i, ++rows)
      if (g[x.offset(i) + 3] != x.duration(i)) ++mismatches;
  }
  return {mismatches == 0, std::to_string(rows) + " time rows equal t_i exactly, " +
                               std::to_string(mismatches) + " mismatches"};
}

// 9. Verification semantics.
Outcome verification() {
  bool ok = true;
  std::ostringstream detail;
  for (int N : {1, 4, 8}) {
    const auto ex = oracle::exact_split(N);
    const Verification v = verify(ex.instance, ex.x);
    ok = ok && v.passed;

    ShootingVector neg = ex.x;
    neg.set_duration(0, -0.1);
    ok = ok && !verify(ex.instance, neg).passed &&
         bench_status(Termination::S1Converged, verify(ex.instance, neg)) == "F";

    const double eps4 = 1e-4;
    ShootingVector outside = ex.x;
    const Vector c = ex.instance.init.center;
    outside.set_start(0, c + (1 + 2 * eps4) * (ex.x.start(0) - c));
    ok = ok && verify(ex.instance, outside, eps4).init_violation;

    const Vector dir = Eigen::Vector2d(-0.8, -0.6);
    const Vector end = ex.instance.unsafe_set.center + 0.25 * dir;
    const auto moved = ProblemInstance::make(
        benchmark3(2), ex.instance.init,
        Ellipsoid::ball(end - 0.25 * (1 + 2 * eps4) * dir, 0.25), N);
    const Verification far = verify(moved, ex.x, eps4);
    ok = ok && !far.passed && far.unsafe_violation;
    const auto inside = ProblemInstance::make(
        benchmark3(2), ex.instance.init,
        Ellipsoid::ball(end - 0.25 * (1 + 0.5 * eps4) * dir, 0.25), N);
    ok = ok && verify(inside, ex.x, eps4).passed;
  }
  return {ok, "exact split accepted for N in {1,4,8}; negative length, Init and "
              "Unsafe excursions of 2 eps4 rejected; 0.5 eps4 accepted"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"derivative consistency", derivative_consistency},
      {"closed-form flow oracle", closed_form_flow},
      {"Jacobian rank properties", rank_properties},
      {"KKT solver equivalence", kkt_equivalence},
      {"structured BFGS", structured_bfgs},
      {"merit and line search", merit_contract},
      {"end-to-end success patterns", end_to_end},
      {"degeneracy of eq10", degeneracy},
      {"verification semantics", verification},
  };
  int failed = 0;
  for (size_t k = 0; k < criteria.size(); ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failed;
    std::cout << "[PRIMARY] criterion " << (k + 1) << " " << criteria[k].first
              << ": " << (o.pass ? "PASS" : "FAIL") << " (" << o.detail << "; "
              << std::fixed << std::setprecision(2) << secs << " s)\n";
  }
  return failed == 0 ? 0 : 1;
}
