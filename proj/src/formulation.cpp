#include "falsify/formulation.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace falsify {

// ---------------------------------------------------------------- Ellipsoid

Ellipsoid Ellipsoid::ball(const Vector& center, double radius) {
  if (!(radius > 0.0))
    throw std::invalid_argument("Ellipsoid::ball: radius must be > 0");
  const auto n = center.size();
  return {center, Matrix::Identity(n, n) / (radius * radius)};
}

double Ellipsoid::quadratic_form(const Vector& v) const {
  const Vector d = v - center;
  return d.dot(shape * d);
}

double Ellipsoid::norm_distance(const Vector& v) const {
  return std::sqrt(quadratic_form(v));
}

void Ellipsoid::validate() const {
  if (shape.rows() != center.size() || shape.cols() != center.size())
    throw std::invalid_argument("Ellipsoid: shape/center dimension mismatch");
  if (!(shape - shape.transpose()).isZero(1e-12))
    throw std::invalid_argument("Ellipsoid: shape must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(shape, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() <= 0.0)
    throw std::invalid_argument("Ellipsoid: shape must be positive definite");
}

// ----------------------------------------------------------- ShootingVector

ShootingVector::ShootingVector(int dim, int segments)
    : dim_(dim), segments_(segments) {
  if (dim < 1 || segments < 1)
    throw std::invalid_argument("ShootingVector: need dim >= 1, N >= 1");
  packed_ = Vector::Zero(segments * (dim + 1));
}

ShootingVector ShootingVector::from_packed(const Vector& packed, int dim,
                                           int segments) {
  ShootingVector x(dim, segments);
  if (packed.size() != x.size())
    throw std::invalid_argument(
        "ShootingVector: packed length " + std::to_string(packed.size()) +
        " != N(n+1) = " + std::to_string(x.size()));
  x.packed_ = packed;
  return x;
}

void ShootingVector::set_start(int i, const Vector& x0) {
  if (x0.size() != dim_)
    throw std::invalid_argument("ShootingVector: start dimension mismatch");
  packed_.segment(offset(i), dim_) = x0;
}

Vector ShootingVector::durations() const {
  Vector t(segments_);
  for (int i = 0; i < segments_; ++i) t[i] = duration(i);
  return t;
}

bool ShootingVector::operator==(const ShootingVector& other) const {
  return dim_ == other.dim_ && segments_ == other.segments_ &&
         packed_ == other.packed_;
}

Vector pack(const ShootingVector& x) { return x.packed(); }

ShootingVector unpack(const Vector& flat, int dim, int segments) {
  return ShootingVector::from_packed(flat, dim, segments);
}

// ---------------------------------------------------------- ProblemInstance

ProblemInstance ProblemInstance::make(OdeSystem system, Ellipsoid init,
                                      Ellipsoid unsafe_set, int n_segments) {
  if (n_segments < 1)
    throw std::invalid_argument("ProblemInstance: need at least one segment");
  if (init.dim() != system.dim() || unsafe_set.dim() != system.dim())
    throw std::invalid_argument("ProblemInstance: set dimension mismatch");
  init.validate();
  unsafe_set.validate();
  if (init.center == unsafe_set.center)
    throw std::invalid_argument("ProblemInstance: init and unsafe centres coincide");
  return {std::move(system), std::move(init), std::move(unsafe_set),
          n_segments};
}

bool ProblemInstance::sets_may_overlap() const {
  // Largest semi-axis is 1 / sqrt(lambda_min(E)).
  const auto radius = [](const Ellipsoid& e) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(e.shape, Eigen::EigenvaluesOnly);
    return 1.0 / std::sqrt(eig.eigenvalues().minCoeff());
  };
  return (init.center - unsafe_set.center).norm() <=
         radius(init) + radius(unsafe_set);
}

// -------------------------------------------------------------- Formulation

Formulation Formulation::by_equation(int equation) {
  using O = Objective;
  using R = Regularizer;
  using C = ConstraintKind;
  switch (equation) {
    case 5: return {O::F1, R::None, C::C1, 5};
    case 6: return {O::F2, R::None, C::C3, 6};
    case 7: return {O::F3, R::None, C::Unconstrained, 7};
    case 8: return {O::Zero, R::R1, C::C2, 8};
    case 9: return {O::F1, R::R1, C::C1, 9};
    case 10: return {O::F2, R::R1, C::C3, 10};
    case 11: return {O::F2, R::R2, C::C3, 11};
    case 12: return {O::F2, R::R3, C::C3, 12};
    case 13: return {O::F3, R::R1, C::Unconstrained, 13};
    default:
      throw std::invalid_argument("no formulation for equation " +
                                  std::to_string(equation));
  }
}

Formulation Formulation::from_name(const std::string& name) {
  if (name.size() > 2 && name.rfind("eq", 0) == 0) {
    const std::string digits = name.substr(2);
    if (digits.find_first_not_of("0123456789") == std::string::npos &&
        digits.size() <= 2)
      return by_equation(std::stoi(digits));
  }
  throw std::invalid_argument("unknown formulation '" + name +
                              "' (expected eq5 ... eq13)");
}

Formulation Formulation::experimental(Objective objective,
                                      Regularizer regularizer,
                                      ConstraintKind constraints) {
  return {objective, regularizer, constraints, 0};
}

std::string Formulation::name() const {
  if (equation_ != 0) return "eq" + std::to_string(equation_);
  static const char* objectives[] = {"F1", "F2", "F3", "Zero"};
  static const char* regularizers[] = {"None", "R1", "R2", "R3"};
  static const char* constraints[] = {"C1", "C2", "C3", "Unconstrained"};
  return std::string("experimental(") +
         objectives[static_cast<int>(objective_)] + "," +
         regularizers[static_cast<int>(regularizer_)] + "," +
         constraints[static_cast<int>(constraints_)] + ")";
}

int constraint_dimension(ConstraintKind kind, int dim, int segments) {
  switch (kind) {
    case ConstraintKind::C1: return dim * (segments - 1);
    case ConstraintKind::C2: return dim * (segments - 1) + 2;
    case ConstraintKind::C3: return 2;
    case ConstraintKind::Unconstrained: return 0;
  }
  return 0;
}

// ------------------------------------------------------------ SegmentFlows

SegmentIntegrationFailure::SegmentIntegrationFailure(int segment,
                                                     const std::string& what)
    : IntegrationFailure("segment " + std::to_string(segment) + ": " + what),
      segment_(segment) {}

SegmentFlows evaluate_segments(const ProblemInstance& instance,
                               const ShootingVector& x,
                               const IntegratorConfig& cfg,
                               bool with_sensitivity) {
  if (x.dim() != instance.dim())
    throw std::invalid_argument("evaluate_segments: dimension mismatch");
  SegmentFlows flows;
  flows.has_sensitivity = with_sensitivity;
  flows.segments.reserve(x.segments());
  for (int i = 0; i < x.segments(); ++i) {
    try {
      if (with_sensitivity) {
        flows.segments.push_back(flow_with_sensitivity(
            instance.system, x.start(i), x.duration(i), cfg));
      } else {
        FlowResult r;
        r.end_state =
            flow(instance.system, x.start(i), x.duration(i), cfg);
        r.end_derivative = instance.system.rhs(x.duration(i), r.end_state);
        flows.segments.push_back(std::move(r));
      }
    } catch (const SegmentIntegrationFailure&) {
      throw;
    } catch (const IntegrationFailure& e) {
      throw SegmentIntegrationFailure(i, e.what());
    }
  }
  return flows;
}

// -------------------------------------------------------------- Multipliers

Multipliers Multipliers::zero(ConstraintKind kind, int dim, int segments) {
  return from_flat(kind, dim, segments,
                   Vector::Zero(constraint_dimension(kind, dim, segments)));
}

Multipliers Multipliers::from_flat(ConstraintKind kind, int dim, int segments,
                                   const Vector& flat) {
  if (flat.size() != constraint_dimension(kind, dim, segments))
    throw std::invalid_argument("Multipliers: length mismatch");
  Multipliers m;
  int pos = 0;
  if (kind == ConstraintKind::C2 || kind == ConstraintKind::C3)
    m.init = flat[pos++];
  if (kind == ConstraintKind::C1 || kind == ConstraintKind::C2) {
    for (int i = 0; i + 1 < segments; ++i, pos += dim)
      m.matching.push_back(flat.segment(pos, dim));
  }
  if (kind == ConstraintKind::C2 || kind == ConstraintKind::C3)
    m.unsafe = flat[pos++];
  return m;
}

Vector Multipliers::flat() const {
  Vector v(size());
  int pos = 0;
  if (init) v[pos++] = *init;
  for (const auto& l : matching) {
    v.segment(pos, l.size()) = l;
    pos += static_cast<int>(l.size());
  }
  if (unsafe) v[pos++] = *unsafe;
  return v;
}

int Multipliers::size() const {
  int s = (init ? 1 : 0) + (unsafe ? 1 : 0);
  for (const auto& l : matching) s += static_cast<int>(l.size());
  return s;
}

// ------------------------------------------------- objective and constraints

std::vector<Vector> matching_residuals(const ShootingVector& x,
                                       const SegmentFlows& flows) {
  std::vector<Vector> r;
  r.reserve(x.segments() > 0 ? x.segments() - 1 : 0);
  for (int i = 0; i + 1 < x.segments(); ++i)
    r.push_back(x.start(i + 1) - flows[i].end_state);
  return r;
}

double regularizer_value(Regularizer r, const ShootingVector& x) {
  const Vector t = x.durations();
  const auto N = t.size();
  switch (r) {
    case Regularizer::None: return 0.0;
    case Regularizer::R1: return 0.5 * t.squaredNorm();
    case Regularizer::R2: {
      double acc = 0.0;
      for (Eigen::Index i = 0; i + 1 < N; ++i)
        acc += (t[i + 1] - t[i]) * (t[i + 1] - t[i]);
      return 0.5 * acc;
    }
    case Regularizer::R3:
      return 0.5 * (t.array() - t.mean()).square().sum();
  }
  return 0.0;
}

namespace {

Vector regularizer_gradient_times(Regularizer r, const Vector& t) {
  const auto N = t.size();
  Vector g = Vector::Zero(N);
  switch (r) {
    case Regularizer::None: break;
    case Regularizer::R1: g = t; break;
    case Regularizer::R2:
      for (Eigen::Index i = 0; i + 1 < N; ++i) {
        const double d = t[i + 1] - t[i];
        g[i] -= d;
        g[i + 1] += d;
      }
      break;
    case Regularizer::R3: g = (t.array() - t.mean()).matrix(); break;
  }
  return g;
}

bool has_boundary_terms(Objective o) {
  return o == Objective::F1 || o == Objective::F3;
}
bool has_matching_terms(Objective o) {
  return o == Objective::F2 || o == Objective::F3;
}

void require_sensitivity(const SegmentFlows& flows, const char* who) {
  if (!flows.has_sensitivity)
    throw std::invalid_argument(std::string(who) +
                                ": segment flows lack sensitivities");
}

}  // namespace

double objective_value(const Formulation& formulation,
                       const ProblemInstance& instance,
                       const ShootingVector& x, const SegmentFlows& flows) {
  const int N = x.segments();
  double value = 0.0;
  const Objective o = formulation.objective();
  if (has_boundary_terms(o)) {
    value += 0.5 * (instance.init.quadratic_form(x.start(0)) +
                    instance.unsafe_set.quadratic_form(flows[N - 1].end_state));
  }
  if (has_matching_terms(o)) {
    for (const auto& r : matching_residuals(x, flows))
      value += 0.5 * r.squaredNorm();
  }
  return value + regularizer_value(formulation.regularizer(), x);
}

Vector objective_gradient(const Formulation& formulation,
                          const ProblemInstance& instance,
                          const ShootingVector& x, const SegmentFlows& flows) {
  require_sensitivity(flows, "objective_gradient");
  const int n = x.dim();
  const int N = x.segments();
  Vector g = Vector::Zero(x.size());
  const Objective o = formulation.objective();

  if (has_boundary_terms(o)) {
    const Ellipsoid& I = instance.init;
    const Ellipsoid& U = instance.unsafe_set;
    g.segment(x.offset(0), n) += I.shape * (x.start(0) - I.center);
    const FlowResult& last = flows[N - 1];
    const Vector w = U.shape * (last.end_state - U.center);
    g.segment(x.offset(N - 1), n) += last.sensitivity.transpose() * w;
    g[x.offset(N - 1) + n] += last.end_derivative.dot(w);
  }
  if (has_matching_terms(o)) {
    const auto residuals = matching_residuals(x, flows);
    for (int i = 0; i + 1 < N; ++i) {
      const Vector& r = residuals[i];
      g.segment(x.offset(i), n) -= flows[i].sensitivity.transpose() * r;
      g[x.offset(i) + n] -= flows[i].end_derivative.dot(r);
      g.segment(x.offset(i + 1), n) += r;
    }
  }
  const Vector gt =
      regularizer_gradient_times(formulation.regularizer(), x.durations());
  for (int i = 0; i < N; ++i) g[x.offset(i) + n] += gt[i];
  return g;
}

Vector constraint_value(ConstraintKind kind, const ProblemInstance& instance,
                        const ShootingVector& x, const SegmentFlows& flows) {
  const int n = x.dim();
  const int N = x.segments();
  Vector c(constraint_dimension(kind, n, N));
  int pos = 0;
  const bool boundary =
      kind == ConstraintKind::C2 || kind == ConstraintKind::C3;
  const bool matching =
      kind == ConstraintKind::C1 || kind == ConstraintKind::C2;
  if (boundary)
    c[pos++] = 0.5 * (instance.init.quadratic_form(x.start(0)) - 1.0);
  if (matching) {
    for (const auto& r : matching_residuals(x, flows)) {
      c.segment(pos, n) = r;
      pos += n;
    }
  }
  if (boundary)
    c[pos++] = 0.5 *
               (instance.unsafe_set.quadratic_form(flows[N - 1].end_state) -
                1.0);
  return c;
}

SparseMatrix constraint_jacobian(ConstraintKind kind,
                                 const ProblemInstance& instance,
                                 const ShootingVector& x,
                                 const SegmentFlows& flows) {
  require_sensitivity(flows, "constraint_jacobian");
  const int n = x.dim();
  const int N = x.segments();
  const int m = constraint_dimension(kind, n, N);
  const bool boundary =
      kind == ConstraintKind::C2 || kind == ConstraintKind::C3;
  const bool matching =
      kind == ConstraintKind::C1 || kind == ConstraintKind::C2;

  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<size_t>((N - 1) * (n * n + 2 * n)) + 2 * n + 2);
  int col = 0;

  if (boundary) {
    const Vector w = instance.init.shape * (x.start(0) - instance.init.center);
    for (int r = 0; r < n; ++r) entries.emplace_back(x.offset(0) + r, col, w[r]);
    ++col;
  }
  if (matching) {
    for (int i = 0; i + 1 < N; ++i) {
      const FlowResult& seg = flows[i];
      for (int c = 0; c < n; ++c, ++col) {
        // Column of -S_i^T is minus row c of S_i.
        for (int r = 0; r < n; ++r)
          entries.emplace_back(x.offset(i) + r, col, -seg.sensitivity(c, r));
        entries.emplace_back(x.offset(i) + n, col, -seg.end_derivative[c]);
        entries.emplace_back(x.offset(i + 1) + c, col, 1.0);
      }
    }
  }
  if (boundary) {
    const FlowResult& last = flows[N - 1];
    const Vector w =
        instance.unsafe_set.shape * (last.end_state - instance.unsafe_set.center);
    const Vector sw = last.sensitivity.transpose() * w;
    for (int r = 0; r < n; ++r)
      entries.emplace_back(x.offset(N - 1) + r, col, sw[r]);
    entries.emplace_back(x.offset(N - 1) + n, col, last.end_derivative.dot(w));
    ++col;
  }

  SparseMatrix b(x.size(), m);
  b.setFromTriplets(entries.begin(), entries.end());
  b.makeCompressed();
  return b;
}

Vector lagrangian_gradient(const Formulation& formulation,
                           const ProblemInstance& instance,
                           const ShootingVector& x, const Vector& lambda,
                           const SegmentFlows& flows) {
  const int m =
      constraint_dimension(formulation.constraints(), x.dim(), x.segments());
  if (lambda.size() != m)
    throw std::invalid_argument("lagrangian_gradient: multiplier length " +
                                std::to_string(lambda.size()) + " != " +
                                std::to_string(m));
  Vector g = objective_gradient(formulation, instance, x, flows);
  if (m > 0)
    g += constraint_jacobian(formulation.constraints(), instance, x, flows) *
         lambda;
  return g;
}

}  // namespace falsify
