#pragma once

#include "retina/lti.hpp"
#include "retina/types.hpp"

#include <vector>

namespace retina {

/// Petrov-Galerkin projection bases with WᵀV = I.
struct ProjectionPair {
  Mat V;
  Mat W;

  int order() const { return static_cast<int>(V.cols()); }
  /// ‖WᵀV - I‖_F
  double biorthogonality_defect() const;
};

/// Replaces W by W (WᵀV)⁻ᵀ so that WᵀV = I. Throws NumericalError when WᵀV is
/// singular to working precision.
void biorthonormalize(ProjectionPair& pair);

/// Orthonormal basis of the column span (thin QR); throws on rank deficiency.
Mat orthonormal_basis(const Mat& x);

struct IrkaOptions {
  double shift_min = 1e-1;
  double shift_max = 1e4;
  double tol = 1e-4;
  int max_iterations = 50;
};

struct IrkaResult {
  ProjectionPair basis;
  Mat Ar;
  Mat Br;
  Mat Cr;
  std::vector<Complex> shifts;
  int iterations = 0;
  bool converged = false;
  /// All eigenvalues of Ar have negative real part.
  bool stable = false;
};

/// Tangential IRKA for x' = A x + B u, y = C x.
IrkaResult irka(const LtiOperator& a, const Mat& b, const Mat& c, int d, const IrkaOptions& options = {});

/// Eigenvalues of a small dense matrix have negative real part.
bool is_stable(const Mat& a);

}  // namespace retina
