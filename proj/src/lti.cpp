#include "retina/lti.hpp"

#include <Eigen/LU>

#include <cmath>
#include <limits>

namespace retina {

namespace {

class DenseShifted final : public ShiftedSolver {
 public:
  DenseShifted(const Mat& a, Complex sigma) {
    const int n = static_cast<int>(a.rows());
    CMat k = -a.cast<Complex>();
    k.diagonal().array() += sigma;
    lu_.compute(k);
    const double rc = lu_.rcond();
    if (!(rc > 1e3 * std::numeric_limits<double>::epsilon()) || n == 0)
      throw NumericalError("shifted solve: sigma I - A is singular");
  }
  CMat solve(const CMat& rhs) const override { return lu_.solve(rhs); }
  CMat solve_transpose(const CMat& rhs) const override { return lu_.transpose().solve(rhs); }

 private:
  Eigen::PartialPivLU<CMat> lu_;
};

// σI - A = M⁻¹(σM - S) with S = M A symmetric, so
//   (σI - A)⁻¹ b = (σM - S)⁻¹ M b,   (σI - A)⁻ᵀ c = M (σM - S)⁻¹ c.
class RealSparseShifted final : public ShiftedSolver {
 public:
  RealSparseShifted(const FullOrderModel& m, double sigma) : mass_(m.mass_weights()) {
    if (!(sigma > 0.0)) throw NumericalError("shifted solve: real shift must be positive");
    SpMat k = -m.symmetric_operator();
    k += SpMat((sigma * mass_).asDiagonal());
    ldlt_.compute(k);
    if (ldlt_.info() != Eigen::Success) throw NumericalError("shifted solve: factorization failed");
  }
  CMat solve(const CMat& rhs) const override {
    const CMat mb = mass_.cast<Complex>().asDiagonal() * rhs;
    return apply(mb);
  }
  CMat solve_transpose(const CMat& rhs) const override {
    return mass_.cast<Complex>().asDiagonal() * apply(rhs);
  }

 private:
  CMat apply(const CMat& rhs) const {
    const Mat re = ldlt_.solve(Mat(rhs.real()));
    const Mat im = ldlt_.solve(Mat(rhs.imag()));
    CMat out(re.rows(), re.cols());
    out.real() = re;
    out.imag() = im;
    return out;
  }
  Vec mass_;
  Eigen::SimplicialLDLT<SpMat> ldlt_;
};

class ComplexSparseShifted final : public ShiftedSolver {
 public:
  ComplexSparseShifted(const FullOrderModel& m, Complex sigma) : mass_(m.mass_weights().cast<Complex>()) {
    using CSp = Eigen::SparseMatrix<Complex>;
    CSp k = -m.symmetric_operator().cast<Complex>();
    CSp diag(m.size(), m.size());
    std::vector<Eigen::Triplet<Complex>> t;
    for (int i = 0; i < m.size(); ++i) t.emplace_back(i, i, sigma * m.mass_weights()[i]);
    diag.setFromTriplets(t.begin(), t.end());
    k += diag;
    k.makeCompressed();
    lu_.analyzePattern(k);
    lu_.factorize(k);
    if (lu_.info() != Eigen::Success) throw NumericalError("shifted solve: sparse LU failed");
  }
  CMat solve(const CMat& rhs) const override {
    const CMat mb = mass_.asDiagonal() * rhs;
    return solve_plain(mb);
  }
  CMat solve_transpose(const CMat& rhs) const override { return mass_.asDiagonal() * solve_plain(rhs); }

 private:
  CMat solve_plain(const CMat& rhs) const {
    CMat out(rhs.rows(), rhs.cols());
    for (Eigen::Index c = 0; c < rhs.cols(); ++c) out.col(c) = lu_.solve(CVec(rhs.col(c)));
    return out;
  }
  using Lu = Eigen::SparseLU<Eigen::SparseMatrix<Complex>, Eigen::COLAMDOrdering<int>>;
  CVec mass_;
  Lu lu_;
};

}  // namespace

std::unique_ptr<ShiftedSolver> DenseLti::factor(Complex sigma) const {
  return std::make_unique<DenseShifted>(a_, sigma);
}

std::unique_ptr<ShiftedSolver> SparseLti::factor(Complex sigma) const {
  if (sigma.imag() == 0.0 && sigma.real() > 0.0) return std::make_unique<RealSparseShifted>(*model_, sigma.real());
  return std::make_unique<ComplexSparseShifted>(*model_, sigma);
}

}  // namespace retina
