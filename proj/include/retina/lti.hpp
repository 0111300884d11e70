#pragma once

#include "retina/model.hpp"
#include "retina/types.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <memory>

namespace retina {

/// Factorization of σI - A for one shift.
class ShiftedSolver {
 public:
  virtual ~ShiftedSolver() = default;
  /// (σI - A)⁻¹ rhs
  virtual CMat solve(const CMat& rhs) const = 0;
  /// (σI - A)⁻ᵀ rhs (plain transpose, not the adjoint)
  virtual CMat solve_transpose(const CMat& rhs) const = 0;
};

/// Linear time-invariant state operator x' = A x, accessed through products
/// and shifted solves only.
class LtiOperator {
 public:
  virtual ~LtiOperator() = default;
  virtual int size() const = 0;
  virtual Mat apply(const Mat& x) const = 0;
  /// Throws NumericalError if σI - A is singular to working precision.
  virtual std::unique_ptr<ShiftedSolver> factor(Complex sigma) const = 0;
};

class DenseLti final : public LtiOperator {
 public:
  explicit DenseLti(Mat a) : a_(std::move(a)) {}
  int size() const override { return static_cast<int>(a_.rows()); }
  Mat apply(const Mat& x) const override { return a_ * x; }
  std::unique_ptr<ShiftedSolver> factor(Complex sigma) const override;
  const Mat& matrix() const { return a_; }

 private:
  Mat a_;
};

/// A_c of a finite-difference model. Shifted systems are solved through the
/// complex symmetric σM - M A_c.
class SparseLti final : public LtiOperator {
 public:
  explicit SparseLti(const FullOrderModel& model) : model_(&model) {}
  int size() const override { return model_->size(); }
  Mat apply(const Mat& x) const override { return model_->system_matrix() * x; }
  std::unique_ptr<ShiftedSolver> factor(Complex sigma) const override;

 private:
  const FullOrderModel* model_;
};

}  // namespace retina
