#include "falsify/kkt.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

namespace falsify {

void SaddleSystem::validate() const {
  if (hess == nullptr) throw std::invalid_argument("SaddleSystem: no Hessian");
  if (hess->size() != m1() || jac.rows() != m1() || jac.cols() != m2())
    throw std::invalid_argument("SaddleSystem: inconsistent dimensions");
}

Matrix SaddleSystem::assemble_dense() const {
  validate();
  const int a = m1();
  const int b = m2();
  Matrix k = Matrix::Zero(a + b, a + b);
  k.topLeftCorner(a, a) = hess->to_dense();
  if (b > 0) {
    const Matrix bd(jac);
    k.topRightCorner(a, b) = bd;
    k.bottomLeftCorner(b, a) = bd.transpose();
  }
  return k;
}

double SaddleSystem::residual_norm(const Vector& d_x,
                                   const Vector& d_lambda) const {
  Vector top = hess->matvec(d_x) - rhs_top;
  if (m2() > 0) top += jac * d_lambda;
  double sq = top.squaredNorm();
  if (m2() > 0)
    sq += (jac.transpose() * d_x - rhs_bottom).squaredNorm();
  return std::sqrt(sq);
}

KktSolution solve_direct(const SaddleSystem& sys) {
  sys.validate();
  const Matrix k = sys.assemble_dense();
  Vector rhs(sys.m1() + sys.m2());
  rhs << sys.rhs_top, sys.rhs_bottom;

  KktSolution sol;
  sol.cg_iterations = 0;
  if (rhs.isZero(0.0)) {
    sol.d_x = Vector::Zero(sys.m1());
    sol.d_lambda = Vector::Zero(sys.m2());
    return sol;
  }

  Eigen::FullPivLU<Matrix> lu(k);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible())
    throw SingularSystem("saddle-point matrix is singular (rank " +
                         std::to_string(lu.rank()) + " of " +
                         std::to_string(k.rows()) + ")");
  Vector z = lu.solve(rhs);
  // One step of iterative refinement.
  z += lu.solve(rhs - k * z);
  sol.d_x = z.head(sys.m1());
  sol.d_lambda = z.tail(sys.m2());
  sol.residual_norm = sys.residual_norm(sol.d_x, sol.d_lambda);
  if (!(sol.residual_norm < 1e-10 * (1.0 + rhs.norm())))
    throw SingularSystem("direct solve residual too large: " +
                         std::to_string(sol.residual_norm));
  return sol;
}

namespace {

// Applications of the constraint preconditioner [[I, B], [B^T, 0]]^{-1}
// through the normal-equations matrix B^T B.
class ConstraintPreconditioner {
 public:
  explicit ConstraintPreconditioner(const SparseMatrix& b) : b_(b) {
    if (b_.cols() == 0) return;
    const SparseMatrix gram = SparseMatrix(b_.transpose()) * b_;
    chol_.compute(gram);
    if (chol_.info() != Eigen::Success)
      throw PreconditionerSingular("factorisation of B^T B failed");
    const Vector d = chol_.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    if (!(d.minCoeff() > 1e-14 * dmax))
      throw PreconditionerSingular("B^T B is numerically singular");
  }

  // Orthogonal projection of v onto null(B^T), with one refinement pass.
  Vector project(const Vector& v) const {
    if (b_.cols() == 0) return v;
    Vector g = v - b_ * chol_.solve(b_.transpose() * v);
    g -= b_ * chol_.solve(b_.transpose() * g);
    return g;
  }

  // Minimum-norm x with B^T x = h, refined once.
  Vector particular(const Vector& h) const {
    Vector x = b_ * chol_.solve(h);
    x += b_ * chol_.solve(h - b_.transpose() * x);
    return x;
  }

  // Least-squares multiplier for B lambda ~ v.
  Vector multiplier(const Vector& v) const {
    return chol_.solve(b_.transpose() * v);
  }

 private:
  const SparseMatrix& b_;
  Eigen::SimplicialLDLT<SparseMatrix> chol_;
};

}  // namespace

KktSolution solve_ppcg(const SaddleSystem& sys, const PpcgOptions& opts) {
  sys.validate();
  const int m1 = sys.m1();
  const int m2 = sys.m2();
  const int max_iter = opts.max_iter < 0 ? 2 * m1 : opts.max_iter;
  const ConstraintPreconditioner prec(sys.jac);
  const HessianApprox& h = *sys.hess;

  const auto drift = [&](const Vector& x) {
    return m2 == 0 ? 0.0
                   : (sys.jac.transpose() * x - sys.rhs_bottom)
                         .lpNorm<Eigen::Infinity>();
  };

  KktSolution sol;
  Vector x = m2 == 0 ? Vector::Zero(m1) : prec.particular(sys.rhs_bottom);
  sol.max_constraint_drift = drift(x);

  Vector r = h.matvec(x) - sys.rhs_top;
  Vector g = prec.project(r);
  r = g;  // residual update: keep r in the range of the projection
  double rg = r.dot(g);
  const double stop = opts.tol * std::sqrt(std::max(rg, 0.0));
  Vector d = -g;

  int it = 0;
  sol.converged = rg <= 0.0;
  while (!sol.converged && it < max_iter) {
    const Vector q = h.matvec(d);
    const double curvature = d.dot(q);
    if (!(curvature > 0.0))
      throw Breakdown("non-positive curvature " + std::to_string(curvature) +
                      " at projected CG iteration " + std::to_string(it));
    const double alpha = rg / curvature;
    x += alpha * d;
    r += alpha * q;
    ++it;
    sol.max_constraint_drift = std::max(sol.max_constraint_drift, drift(x));

    const Vector g_new = prec.project(r);
    r = g_new;
    const double rg_new = r.dot(g_new);
    if (std::sqrt(std::max(rg_new, 0.0)) <= stop) {
      sol.converged = true;
      break;
    }
    const double beta = rg_new / rg;
    d = -g_new + beta * d;
    rg = rg_new;
  }

  sol.d_x = std::move(x);
  sol.cg_iterations = it;
  sol.d_lambda = m2 == 0 ? Vector()
                         : prec.multiplier(sys.rhs_top - h.matvec(sol.d_x));
  sol.residual_norm = sys.residual_norm(sol.d_x, sol.d_lambda);
  return sol;
}

Matrix nullspace_basis(const SparseMatrix& b) {
  const Matrix bd(b);
  const auto m1 = bd.rows();
  const auto m2 = bd.cols();
  if (m2 == 0) return Matrix::Identity(m1, m1);
  Eigen::ColPivHouseholderQR<Matrix> qr(bd);
  qr.setThreshold(1e-12);
  if (qr.rank() < m2)
    throw RankDeficient("constraint Jacobian has rank " +
                        std::to_string(qr.rank()) + " < " +
                        std::to_string(m2));
  const Matrix q = qr.householderQ();
  return q.rightCols(m1 - m2);
}

namespace {
double condition_number(const Matrix& m) {
  if (m.size() == 0) return 1.0;
  Eigen::BDCSVD<Matrix> svd(m);
  const Vector s = svd.singularValues();
  const double smin = s[s.size() - 1];
  return smin > 0.0 ? s[0] / smin : std::numeric_limits<double>::infinity();
}
}  // namespace

ConditionReport condition_report(const HessianApprox& h,
                                 const SparseMatrix& b) {
  const Matrix hd = h.to_dense();
  const Matrix nb = nullspace_basis(b);
  ConditionReport rep;
  rep.hessian = condition_number(hd);
  rep.projected_hessian = condition_number(nb.transpose() * hd * nb);
  const Matrix bd(b);
  rep.jacobian_gram = condition_number(bd.transpose() * bd);
  return rep;
}

void write_triplets(std::ostream& out, const SparseMatrix& m) {
  out << std::setprecision(17);
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it)
      out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

void write_triplets(std::ostream& out, const Matrix& m) {
  out << std::setprecision(17);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (m(i, j) != 0.0) out << i << ' ' << j << ' ' << m(i, j) << '\n';
}

void write_triplets(std::ostream& out, const Vector& v) {
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v[i] != 0.0) out << i << " 0 " << v[i] << '\n';
}

void dump_saddle_system(const SaddleSystem& sys, const std::string& prefix) {
  const auto open = [](const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    return f;
  };
  {
    auto f = open(prefix + ".H.txt");
    write_triplets(f, sys.hess->to_dense());
  }
  {
    auto f = open(prefix + ".B.txt");
    write_triplets(f, sys.jac);
  }
  {
    auto f = open(prefix + ".rhs.txt");
    Vector rhs(sys.m1() + sys.m2());
    rhs << sys.rhs_top, sys.rhs_bottom;
    write_triplets(f, rhs);
  }
}

}  // namespace falsify
