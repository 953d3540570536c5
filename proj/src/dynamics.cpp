#include "falsify/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace falsify {

OdeSystem::OdeSystem(int dim, RhsFunction rhs, JacobianFunction jacobian,
                     std::string label)
    : dim_(dim),
      rhs_(std::move(rhs)),
      jacobian_(std::move(jacobian)),
      label_(std::move(label)) {
  if (dim_ < 1) throw std::invalid_argument("OdeSystem: dim must be >= 1");
}

void IntegratorConfig::validate() const {
  if (!(rel_tol > 0.0) || !(abs_tol > 0.0))
    throw std::invalid_argument("IntegratorConfig: tolerances must be > 0");
  if (max_steps < 1)
    throw std::invalid_argument("IntegratorConfig: max_steps must be >= 1");
}

namespace {

using AugmentedRhs = std::function<Vector(double, const Vector&)>;

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                 a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b - b_hat, the embedded error estimate weights.
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

constexpr double kSafety = 0.9;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 10.0;
constexpr double kBeta = 0.04;
constexpr double kAlpha = 0.2 - 0.75 * kBeta;
constexpr double kStateLimit = 1e150;

double scaled_norm(const Vector& v, const Vector& y0, const Vector& y1,
                   const IntegratorConfig& cfg) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double sc =
        cfg.abs_tol + cfg.rel_tol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    const double r = v[i] / sc;
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(v.size()));
}

// Starting step size from the derivative magnitudes (Hairer, Norsett &
// Wanner, II.4).
double initial_step(const AugmentedRhs& f, const Vector& y0, const Vector& k1,
                    double direction, double span,
                    const IntegratorConfig& cfg) {
  const double d0 = scaled_norm(y0, y0, y0, cfg);
  const double d1 = scaled_norm(k1, y0, y0, cfg);
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h0 = std::min(h0, span);
  const Vector y1 = y0 + direction * h0 * k1;
  const Vector k2 = f(direction * h0, y1);
  const double d2 = scaled_norm(k2 - k1, y0, y0, cfg) / h0;
  const double dmax = std::max(d1, d2);
  const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                  : std::pow(0.01 / dmax, 1.0 / 5.0);
  return std::min({100.0 * h0, h1, span});
}

Vector integrate(const AugmentedRhs& f, const Vector& y0, double duration,
                 const IntegratorConfig& cfg) {
  cfg.validate();
  if (!y0.allFinite())
    throw IntegrationFailure("initial state is not finite");
  if (!std::isfinite(duration))
    throw IntegrationFailure("duration is not finite");
  if (duration == 0.0) return y0;

  const double direction = duration > 0.0 ? 1.0 : -1.0;
  const double span = std::abs(duration);

  Vector y = y0;
  Vector k1 = f(0.0, y);
  if (!k1.allFinite()) throw IntegrationFailure("rhs is not finite");

  double t = 0.0;  // elapsed |time|
  double h = initial_step(f, y, k1, direction, span, cfg);
  double err_prev = 1e-4;
  bool rejected_last = false;

  for (int steps = 0; steps < cfg.max_steps; ++steps) {
    if (span - t <= 1e-15 * std::max(1.0, span)) return y;
    bool last = false;
    if (t + h >= span) {
      h = span - t;
      last = true;
    }
    const double hs = direction * h;
    const double ts = direction * t;

    const Vector k2 = f(ts + c2 * hs, y + hs * (a21 * k1));
    const Vector k3 = f(ts + c3 * hs, y + hs * (a31 * k1 + a32 * k2));
    const Vector k4 =
        f(ts + c4 * hs, y + hs * (a41 * k1 + a42 * k2 + a43 * k3));
    const Vector k5 = f(ts + c5 * hs,
                        y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const Vector k6 = f(ts + hs, y + hs * (a61 * k1 + a62 * k2 + a63 * k3 +
                                           a64 * k4 + a65 * k5));
    Vector y_new =
        y + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    Vector k7 = f(ts + hs, y_new);

    if (!y_new.allFinite() || !k7.allFinite()) {
      rejected_last = true;
      h *= kMinFactor;
      if (h < 1e-14 * std::max(1.0, span))
        throw IntegrationFailure("state left the finite range");
      continue;
    }

    const Vector err_vec = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 +
                                 e6 * k6 + e7 * k7);
    const double err = scaled_norm(err_vec, y, y_new, cfg);

    if (err <= 1.0) {
      double fac =
          err == 0.0 ? kMaxFactor
                     : kSafety * std::pow(err, -kAlpha) *
                           std::pow(err_prev, kBeta);
      fac = std::clamp(fac, kMinFactor, kMaxFactor);
      if (rejected_last) fac = std::min(fac, 1.0);
      err_prev = std::max(err, 1e-4);
      t = last ? span : t + h;
      y = std::move(y_new);
      k1 = std::move(k7);
      if (y.lpNorm<Eigen::Infinity>() > kStateLimit)
        throw IntegrationFailure("state left the finite range");
      if (last) return y;
      h *= fac;
      rejected_last = false;
    } else {
      const double fac = std::max(
          kMinFactor, kSafety * std::pow(err, -kAlpha));
      h *= fac;
      rejected_last = true;
    }
    if (h < 1e-14 * std::max(1.0, span))
      throw IntegrationFailure("step size underflow");
  }
  throw IntegrationFailure("exceeded max_steps (" +
                           std::to_string(cfg.max_steps) + ")");
}

}  // namespace

Vector flow(const OdeSystem& system, const Vector& x0, double duration,
            const IntegratorConfig& cfg) {
  if (x0.size() != system.dim())
    throw std::invalid_argument("flow: state dimension mismatch");
  return integrate(
      [&system](double t, const Vector& x) { return system.rhs(t, x); }, x0,
      duration, cfg);
}

FlowResult flow_with_sensitivity(const OdeSystem& system, const Vector& x0,
                                 double duration,
                                 const IntegratorConfig& cfg) {
  const int n = system.dim();
  if (x0.size() != n)
    throw std::invalid_argument("flow_with_sensitivity: dimension mismatch");

  // Layout: [x; vec(S)] with S stored column-major.
  Vector y0(n + n * n);
  y0.head(n) = x0;
  Eigen::Map<Matrix>(y0.data() + n, n, n).setIdentity();

  const auto augmented = [&system, n](double t, const Vector& y) {
    const Vector x = y.head(n);
    Vector dy(y.size());
    dy.head(n) = system.rhs(t, x);
    Eigen::Map<Matrix>(dy.data() + n, n, n).noalias() =
        system.state_jacobian(t, x) *
        Eigen::Map<const Matrix>(y.data() + n, n, n);
    return dy;
  };

  const Vector y = integrate(augmented, y0, duration, cfg);
  FlowResult result;
  result.end_state = y.head(n);
  result.sensitivity = Eigen::Map<const Matrix>(y.data() + n, n, n);
  result.end_derivative = system.rhs(duration, result.end_state);
  return result;
}

Matrix block_rotation_matrix(int n) {
  if (n < 2 || n % 2 != 0)
    throw std::invalid_argument("block rotation requires a positive even n");
  Matrix a = Matrix::Zero(n, n);
  for (int k = 0; k < n; k += 2) {
    a(k, k + 1) = 1.0;
    a(k + 1, k) = -1.0;
  }
  return a;
}

OdeSystem benchmark1(int n) {
  if (n < 2 || n % 2 != 0)
    throw std::invalid_argument("benchmark1: n must be a positive even integer");
  const Matrix a = block_rotation_matrix(n);
  auto rhs = [a, n](double, const Vector& x) -> Vector {
    Vector dx = a * x;
    for (int i = 0; i < n; ++i) dx[i] += std::sin(x[n - 1 - i]);
    return dx;
  };
  auto jac = [a, n](double, const Vector& x) -> Matrix {
    Matrix j = a;
    for (int i = 0; i < n; ++i) j(i, n - 1 - i) += std::cos(x[n - 1 - i]);
    return j;
  };
  return OdeSystem(n, std::move(rhs), std::move(jac),
                   "benchmark1(n=" + std::to_string(n) + ")");
}

OdeSystem benchmark2() {
  auto rhs = [](double, const Vector& x) -> Vector {
    Vector dx(3);
    dx[0] = -x[1] + x[0] * x[2];
    dx[1] = x[0] + x[1] * x[2];
    dx[2] = -x[2] - x[0] * x[0] - x[1] * x[1] + x[2] * x[2];
    return dx;
  };
  auto jac = [](double, const Vector& x) -> Matrix {
    Matrix j(3, 3);
    j << x[2], -1.0, x[0],
         1.0, x[2], x[1],
         -2.0 * x[0], -2.0 * x[1], -1.0 + 2.0 * x[2];
    return j;
  };
  return OdeSystem(3, std::move(rhs), std::move(jac), "benchmark2");
}

OdeSystem benchmark3(int n) {
  if (n < 2 || n % 2 != 0)
    throw std::invalid_argument("benchmark3: n must be a positive even integer");
  const Matrix a = block_rotation_matrix(n);
  auto rhs = [a](double, const Vector& x) -> Vector { return a * x; };
  auto jac = [a](double, const Vector&) -> Matrix { return a; };
  return OdeSystem(n, std::move(rhs), std::move(jac),
                   "benchmark3(n=" + std::to_string(n) + ")");
}

}  // namespace falsify
