#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "falsify/dynamics.hpp"

namespace falsify {

using SparseMatrix = Eigen::SparseMatrix<double>;  // column-compressed

/// {v : (v - center)^T shape (v - center) <= 1}
struct Ellipsoid {
  Vector center;
  Matrix shape;

  /// Ball of the given radius, i.e. shape = I / radius^2.
  static Ellipsoid ball(const Vector& center, double radius);

  int dim() const { return static_cast<int>(center.size()); }
  /// (v - c)^T E (v - c)
  double quadratic_form(const Vector& v) const;
  /// sqrt of quadratic_form: the E-norm distance to the centre.
  double norm_distance(const Vector& v) const;
  /// Throws std::invalid_argument unless shape is symmetric positive definite.
  void validate() const;
};

/// Multiple-shooting parameter vector [x0^1, t1, x0^2, t2, ..., x0^N, tN],
/// stored packed in exactly that interleaved order.
class ShootingVector {
 public:
  ShootingVector(int dim, int segments);

  static ShootingVector from_packed(const Vector& packed, int dim,
                                    int segments);

  int dim() const { return dim_; }
  int segments() const { return segments_; }
  int size() const { return segments_ * (dim_ + 1); }

  const Vector& packed() const { return packed_; }
  Vector& packed() { return packed_; }

  Vector start(int i) const { return packed_.segment(offset(i), dim_); }
  void set_start(int i, const Vector& x0);
  double duration(int i) const { return packed_[offset(i) + dim_]; }
  void set_duration(int i, double t) { packed_[offset(i) + dim_] = t; }
  Vector durations() const;

  /// Offset of segment i's state block in the packed vector; its time
  /// entry sits at offset(i) + dim().
  int offset(int i) const { return i * (dim_ + 1); }

  bool operator==(const ShootingVector& other) const;

 private:
  int dim_;
  int segments_;
  Vector packed_;
};

Vector pack(const ShootingVector& x);
/// Throws std::invalid_argument when flat.size() != segments * (dim + 1).
ShootingVector unpack(const Vector& flat, int dim, int segments);

struct ProblemInstance {
  OdeSystem system;
  Ellipsoid init;
  Ellipsoid unsafe_set;
  int n_segments;

  /// Validates dimensions, SPD shapes, N >= 1 and distinct centres.
  static ProblemInstance make(OdeSystem system, Ellipsoid init,
                              Ellipsoid unsafe_set, int n_segments);

  int dim() const { return system.dim(); }
  /// Conservative overlap test: true when the bounding balls intersect.
  bool sets_may_overlap() const;
};

enum class Objective { F1, F2, F3, Zero };
enum class Regularizer { None, R1, R2, R3 };
enum class ConstraintKind { C1, C2, C3, Unconstrained };

/// One of the optimisation problems built from an objective, a regularizer
/// and a constraint vector. Only the combinations numbered by equation 5 to
/// 13 can be constructed by name; `experimental` admits any combination.
class Formulation {
 public:
  /// Throws std::invalid_argument for equations outside 5..13.
  static Formulation by_equation(int equation);
  /// Accepts "eq5" ... "eq13".
  static Formulation from_name(const std::string& name);
  static Formulation experimental(Objective objective, Regularizer regularizer,
                                  ConstraintKind constraints);

  Objective objective() const { return objective_; }
  Regularizer regularizer() const { return regularizer_; }
  ConstraintKind constraints() const { return constraints_; }
  /// Equation number, or 0 for experimental combinations.
  int equation() const { return equation_; }
  std::string name() const;

 private:
  Formulation(Objective o, Regularizer r, ConstraintKind c, int eq)
      : objective_(o), regularizer_(r), constraints_(c), equation_(eq) {}

  Objective objective_;
  Regularizer regularizer_;
  ConstraintKind constraints_;
  int equation_;
};

/// Number of rows of the constraint vector for `kind`.
int constraint_dimension(ConstraintKind kind, int dim, int segments);

/// One integration per segment of the shooting vector it was built from.
struct SegmentFlows {
  std::vector<FlowResult> segments;
  bool has_sensitivity = false;

  const FlowResult& operator[](int i) const { return segments[i]; }
};

/// IntegrationFailure annotated with the (zero-based) failing segment.
class SegmentIntegrationFailure : public IntegrationFailure {
 public:
  SegmentIntegrationFailure(int segment, const std::string& what);
  int segment_index() const { return segment_; }

 private:
  int segment_;
};

/// Integrates every segment. Without sensitivities only end states and end
/// derivatives are filled (sufficient for values, not for derivatives).
SegmentFlows evaluate_segments(const ProblemInstance& instance,
                               const ShootingVector& x,
                               const IntegratorConfig& cfg,
                               bool with_sensitivity = true);

/// Lagrange multipliers split by role. The flat order matches the columns of
/// the constraint Jacobian: C1 -> [l_1..l_{N-1}], C2 -> [l_I, l_1..l_{N-1},
/// l_U], C3 -> [l_I, l_U], Unconstrained -> [].
struct Multipliers {
  std::vector<Vector> matching;
  std::optional<double> init;
  std::optional<double> unsafe;

  static Multipliers zero(ConstraintKind kind, int dim, int segments);
  static Multipliers from_flat(ConstraintKind kind, int dim, int segments,
                               const Vector& flat);
  Vector flat() const;
  int size() const;
};

/// Matching residuals x0^{i+1} - Phi(t_i, x0^i), i = 1..N-1.
std::vector<Vector> matching_residuals(const ShootingVector& x,
                                       const SegmentFlows& flows);

double regularizer_value(Regularizer r, const ShootingVector& x);

double objective_value(const Formulation& formulation,
                       const ProblemInstance& instance,
                       const ShootingVector& x, const SegmentFlows& flows);

/// Gradient of objective_value in the packed layout. Requires sensitivities.
Vector objective_gradient(const Formulation& formulation,
                          const ProblemInstance& instance,
                          const ShootingVector& x, const SegmentFlows& flows);

Vector constraint_value(ConstraintKind kind, const ProblemInstance& instance,
                        const ShootingVector& x, const SegmentFlows& flows);

/// B = [grad c_1, ..., grad c_m], of size N(n+1) x m, with exactly the
/// block pattern of the matching / boundary constraints.
SparseMatrix constraint_jacobian(ConstraintKind kind,
                                 const ProblemInstance& instance,
                                 const ShootingVector& x,
                                 const SegmentFlows& flows);

/// grad_X L = grad F + B lambda. Throws std::invalid_argument when the
/// multiplier length does not match the formulation's constraints.
Vector lagrangian_gradient(const Formulation& formulation,
                           const ProblemInstance& instance,
                           const ShootingVector& x, const Vector& lambda,
                           const SegmentFlows& flows);

/// Direct row-by-row evaluation of the closed-form Lagrangian gradients for
/// equations 8 to 13, written independently of objective_gradient and
/// constraint_jacobian. Returns nullopt for the other formulations.
std::optional<Vector> lagrangian_gradient_closed_form(
    const Formulation& formulation, const ProblemInstance& instance,
    const ShootingVector& x, const Vector& lambda, const SegmentFlows& flows);

}  // namespace falsify
