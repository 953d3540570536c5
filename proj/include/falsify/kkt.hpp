#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>

#include "falsify/formulation.hpp"
#include "falsify/hessian.hpp"

namespace falsify {

class SingularSystem : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Projected CG met a non-positive curvature pivot: the Hessian is not
/// positive definite on the null space of B^T.
class Breakdown : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PreconditionerSingular : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RankDeficient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// [[H, B], [B^T, 0]] [d_x; d_lambda] = [rhs_top; rhs_bottom]
struct SaddleSystem {
  const HessianApprox* hess = nullptr;
  SparseMatrix jac;  // m1 x m2
  Vector rhs_top;    // -grad_X L
  Vector rhs_bottom; // -c(X)

  int m1() const { return static_cast<int>(rhs_top.size()); }
  int m2() const { return static_cast<int>(rhs_bottom.size()); }
  void validate() const;
  /// Dense copy of the full saddle-point matrix.
  Matrix assemble_dense() const;
  /// 2-norm of the residual of the full system at (d_x, d_lambda).
  double residual_norm(const Vector& d_x, const Vector& d_lambda) const;
};

struct KktSolution {
  Vector d_x;
  Vector d_lambda;
  double residual_norm = 0.0;
  int cg_iterations = 0;
  bool converged = true;
  /// Largest |B^T x_k - rhs_bottom| over all projected CG iterates.
  double max_constraint_drift = 0.0;
};

/// Dense factorisation oracle (intended for m1 + m2 <= 2000). Throws
/// SingularSystem when the matrix is numerically rank deficient.
KktSolution solve_direct(const SaddleSystem& sys);

struct PpcgOptions {
  double tol = 1e-10;  // relative to the initial projected residual
  int max_iter = -1;   // -1 selects 2 * m1
};

/// Projected preconditioned conjugate gradients with the constraint
/// preconditioner [[I, B], [B^T, 0]]. Applications of the preconditioner go
/// through a sparse Cholesky factorisation of B^T B; every iterate satisfies
/// B^T d_x = rhs_bottom up to rounding.
KktSolution solve_ppcg(const SaddleSystem& sys, const PpcgOptions& opts = {});

/// Orthonormal basis of the null space of B^T (m1 x (m1 - m2)), from a
/// column-pivoted Householder QR. Throws RankDeficient if rank(B) < m2.
Matrix nullspace_basis(const SparseMatrix& b);

struct ConditionReport {
  double hessian = 0.0;
  double projected_hessian = 0.0;
  double jacobian_gram = 0.0;  // cond(B^T B)
};

ConditionReport condition_report(const HessianApprox& h, const SparseMatrix& b);

/// Writes "row col value" lines (17 significant digits) for every stored
/// entry, zero-based indices.
void write_triplets(std::ostream& out, const SparseMatrix& m);
void write_triplets(std::ostream& out, const Matrix& m);
void write_triplets(std::ostream& out, const Vector& v);

/// Writes <prefix>.H.txt, <prefix>.B.txt and <prefix>.rhs.txt; the rhs file
/// stacks rhs_top over rhs_bottom as a single column.
void dump_saddle_system(const SaddleSystem& sys, const std::string& prefix);

}  // namespace falsify
