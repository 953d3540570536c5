#include "falsify/hessian.hpp"

#include <stdexcept>

namespace falsify {

HessianVariant hessian_variant_from_name(const std::string& name) {
  if (name == "full") return HessianVariant::FullDense;
  if (name == "blockdiag") return HessianVariant::BlockDiagonal;
  if (name == "banded") return HessianVariant::Banded;
  throw std::invalid_argument("unknown hessian variant '" + name +
                              "' (expected full, blockdiag or banded)");
}

std::string to_string(HessianVariant v) {
  switch (v) {
    case HessianVariant::FullDense: return "full";
    case HessianVariant::BlockDiagonal: return "blockdiag";
    case HessianVariant::Banded: return "banded";
  }
  return "?";
}

HessianApprox HessianApprox::identity(HessianVariant variant, int dim,
                                      int segments) {
  if (dim < 1 || segments < 1)
    throw std::invalid_argument("HessianApprox: need dim >= 1, N >= 1");
  HessianApprox h;
  h.variant_ = variant;
  const int block = dim + 1;
  h.size_ = segments * block;

  int element_size = h.size_;
  switch (variant) {
    case HessianVariant::FullDense:
      h.offsets_ = {0};
      break;
    case HessianVariant::BlockDiagonal:
      element_size = block;
      for (int i = 0; i < segments; ++i) h.offsets_.push_back(i * block);
      break;
    case HessianVariant::Banded:
      if (segments == 1) {
        element_size = block;
        h.offsets_ = {0};
      } else {
        element_size = 2 * block;
        for (int i = 0; i + 1 < segments; ++i) h.offsets_.push_back(i * block);
      }
      break;
  }

  h.coverage_ = Vector::Zero(h.size_);
  for (int off : h.offsets_)
    h.coverage_.segment(off, element_size).array() += 1.0;
  // Split the identity so that the elements sum to exactly I.
  for (int off : h.offsets_) {
    h.elements_.push_back(
        h.coverage_.segment(off, element_size).cwiseInverse().asDiagonal());
  }
  return h;
}

HessianApprox::UpdateStats HessianApprox::update(const Vector& s,
                                                 const Vector& y) {
  if (s.size() != size_ || y.size() != size_)
    throw std::invalid_argument("HessianApprox::update: dimension mismatch");
  UpdateStats stats;
  for (size_t k = 0; k < elements_.size(); ++k) {
    Matrix& hk = elements_[k];
    const auto m = hk.rows();
    const Vector sk = s.segment(offsets_[k], m);
    const Vector yk =
        y.segment(offsets_[k], m).cwiseQuotient(coverage_.segment(offsets_[k], m));
    const double ys = yk.dot(sk);
    const Vector hs = hk * sk;
    const double shs = sk.dot(hs);
    if (!(ys > 0.0) || !(shs > 0.0)) {
      ++stats.skipped;
      continue;
    }
    hk.noalias() -= (hs * hs.transpose()) / shs;
    hk.noalias() += (yk * yk.transpose()) / ys;
    // Restore exact symmetry lost to rounding in the rank-one terms.
    hk = 0.5 * (hk + hk.transpose()).eval();
    ++stats.applied;
  }
  skip_count_ += stats.skipped;
  return stats;
}

Vector HessianApprox::matvec(const Vector& v) const {
  if (v.size() != size_)
    throw std::invalid_argument("HessianApprox::matvec: dimension mismatch");
  Vector out = Vector::Zero(size_);
  for (size_t k = 0; k < elements_.size(); ++k) {
    const auto m = elements_[k].rows();
    out.segment(offsets_[k], m).noalias() +=
        elements_[k] * v.segment(offsets_[k], m);
  }
  return out;
}

Matrix HessianApprox::to_dense() const {
  Matrix h = Matrix::Zero(size_, size_);
  for (size_t k = 0; k < elements_.size(); ++k) {
    const auto m = elements_[k].rows();
    h.block(offsets_[k], offsets_[k], m, m) += elements_[k];
  }
  return h;
}

}  // namespace falsify
