#pragma once

#include <string>
#include <vector>

#include "falsify/dynamics.hpp"

namespace falsify {

enum class HessianVariant { FullDense, BlockDiagonal, Banded };

HessianVariant hessian_variant_from_name(const std::string& name);
std::string to_string(HessianVariant v);

/// Quasi-Newton approximation of the Lagrangian Hessian in the packed
/// shooting layout (N segments of n + 1 coordinates).
///
/// Every variant is held as a sum of dense symmetric element matrices placed
/// on the diagonal, H = sum_k P_k^T H_k P_k:
///   - FullDense: one element spanning all coordinates;
///   - BlockDiagonal: N disjoint elements of size n + 1;
///   - Banded: N - 1 elements of size 2(n + 1) covering consecutive segment
///     pairs with stride n + 1 (a single element when N = 1).
/// Each element is updated with the BFGS formula on its own slice of s and
/// its share of y, so structural zeros are exact by construction and the
/// sum stays SPD as long as every element does.
class HessianApprox {
 public:
  static HessianApprox identity(HessianVariant variant, int dim, int segments);

  HessianVariant variant() const { return variant_; }
  int size() const { return size_; }
  int element_count() const { return static_cast<int>(elements_.size()); }
  /// Total number of element updates skipped by the curvature rule.
  int skip_count() const { return skip_count_; }

  struct UpdateStats {
    int applied = 0;
    int skipped = 0;
  };

  /// BFGS update H - H s s^T H / (s^T H s) + y y^T / (y^T s) per element.
  /// An element whose curvature y_k^T s_k is not positive is left untouched.
  UpdateStats update(const Vector& s, const Vector& y);

  Vector matvec(const Vector& v) const;
  Matrix to_dense() const;

  /// Element k as (offset, dense block).
  int element_offset(int k) const { return offsets_[k]; }
  const Matrix& element(int k) const { return elements_[k]; }

 private:
  HessianApprox() = default;

  HessianVariant variant_ = HessianVariant::FullDense;
  int size_ = 0;
  int skip_count_ = 0;
  std::vector<int> offsets_;
  std::vector<Matrix> elements_;
  Vector coverage_;  // number of elements touching each coordinate
};

}  // namespace falsify
