#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <complex>
#include <stdexcept>
#include <string>

namespace retina {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using SpMat = Eigen::SparseMatrix<double>;
using Complex = std::complex<double>;

/// Raised when a numerical kernel cannot produce a result (singular solve,
/// failed factorization, rank deficiency).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Execution policy for the data-parallel kernels. `serial` is the
/// reference path; `parallel` distributes independent work items over
/// OpenMP threads and must reproduce the serial result bitwise.
enum class Policy { serial, parallel };

}  // namespace retina
