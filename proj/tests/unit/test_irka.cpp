#include "oracles/lyapunov.hpp"
#include "retina/irka.hpp"
#include "retina/simulate.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace retina;

namespace {

Mat random_matrix(int r, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Mat m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = nd(rng);
  return m;
}

// Stable, diagonalizable, non-normal.
Mat test_system(int n, std::uint64_t seed) {
  Eigen::VectorXd lam(n);
  for (int i = 0; i < n; ++i) lam[i] = -std::pow(10.0, -1.0 + 4.0 * i / (n - 1));
  const Mat t = Mat::Identity(n, n) + 0.3 / std::sqrt(static_cast<double>(n)) * random_matrix(n, n, seed);
  return t * lam.asDiagonal() * t.inverse();
}

double dc(const Mat& a, const Mat& b, const Mat& c) { return (-c * a.partialPivLu().solve(b))(0, 0); }

}  // namespace

TEST_CASE("biorthonormalization and orthonormal bases") {
  ProjectionPair p{random_matrix(20, 4, 1), random_matrix(20, 4, 2)};
  biorthonormalize(p);
  CHECK(p.biorthogonality_defect() <= 1e-10);
  const Mat q = orthonormal_basis(random_matrix(20, 4, 3));
  CHECK((q.transpose() * q - Mat::Identity(4, 4)).norm() <= 1e-12);
  Mat dep = random_matrix(20, 3, 4);
  dep.col(2) = dep.col(0) + dep.col(1);
  CHECK_THROWS_AS(orthonormal_basis(dep), NumericalError);
}

TEST_CASE("full-order IRKA of a diagonal system is exact at DC") {
  Eigen::VectorXd lam(10);
  for (int i = 0; i < 10; ++i) lam[i] = -(i + 1.0) * 3.0;
  const Mat a = lam.asDiagonal();
  const Mat b = Mat::Ones(10, 1);
  Mat c = Mat::Ones(1, 10);
  c(0, 3) = 2.0;
  const IrkaResult r = irka(DenseLti(a), b, c, 10);
  CHECK(r.basis.biorthogonality_defect() <= 1e-10);
  CHECK(dc(r.Ar, r.Br, r.Cr) == doctest::Approx(dc(a, b, c)).epsilon(1e-8));
  CHECK(r.stable);
}

TEST_CASE("IRKA H2 error is within twice the balanced truncation error") {
  const int n = 50;
  const Mat a = test_system(n, 7);
  const Mat b = random_matrix(n, 1, 8);
  const Mat c = random_matrix(1, n, 9);
  for (int d : {2, 4, 6}) {
    const IrkaResult r = irka(DenseLti(a), b, c, d);
    const auto bt = oracle::balanced_truncation(a, b, c, d);
    const double e_irka = oracle::h2_error(a, b, c, r.Ar, r.Br, r.Cr);
    const double e_bt = oracle::h2_error(a, b, c, bt.a, bt.b, bt.c);
    CHECK(e_irka <= 2.0 * e_bt);
  }
}

TEST_CASE("IRKA converges on a state-space symmetric system") {
  const int n = 50;
  const Mat t = orthonormal_basis(random_matrix(n, n, 21));
  Eigen::VectorXd lam(n);
  for (int i = 0; i < n; ++i) lam[i] = -std::pow(10.0, -1.0 + 4.0 * i / (n - 1));
  const Mat a = t * lam.asDiagonal() * t.transpose();
  const Mat b = random_matrix(n, 1, 22);
  for (int d : {1, 2, 4, 6, 8}) {
    const IrkaResult r = irka(DenseLti(a), b, b.transpose(), d);
    CHECK(r.converged);
    CHECK(r.stable);
  }
}

TEST_CASE("converged IRKA interpolates at the mirrored reduced poles") {
  const int n = 40;
  const Mat a = test_system(n, 17);
  const Mat b = random_matrix(n, 1, 18);
  const Mat c = random_matrix(1, n, 19);
  const IrkaResult r = irka(DenseLti(a), b, c, 4);
  REQUIRE(r.converged);
  for (const Complex s : r.shifts) {
    const CMat sa = s * CMat::Identity(n, n) - a.cast<Complex>();
    const CMat sar = s * CMat::Identity(4, 4) - r.Ar.cast<Complex>();
    const Complex h = (c.cast<Complex>() * sa.partialPivLu().solve(b.cast<Complex>()))(0, 0);
    const Complex hr = (r.Cr.cast<Complex>() * sar.partialPivLu().solve(r.Br.cast<Complex>()))(0, 0);
    CHECK(std::abs(h - hr) <= 1e-3 * std::abs(h));
  }
}

TEST_CASE("IRKA is deterministic") {
  const Mat a = test_system(30, 5);
  const Mat b = random_matrix(30, 2, 6);
  const Mat c = random_matrix(3, 30, 7);
  const IrkaResult r1 = irka(DenseLti(a), b, c, 5);
  const IrkaResult r2 = irka(DenseLti(a), b, c, 5);
  CHECK(r1.basis.V == r2.basis.V);
  CHECK(r1.basis.W == r2.basis.W);
  CHECK(r1.Ar == r2.Ar);
}

TEST_CASE("sparse and dense shifted solves agree on a model") {
  GridConfig g;
  g.radius = 5e-4;
  g.n_r = 6;
  g.n_z = 30;
  const FullOrderModel m(LayerStack{}, g);
  const SparseLti sp(m);
  const DenseLti de(Mat(m.system_matrix()));
  const CMat rhs = random_matrix(m.size(), 2, 3).cast<Complex>();
  for (Complex s : {Complex(10.0, 0.0), Complex(3.0, 40.0), Complex(-0.5, 0.0)}) {
    const auto fs = sp.factor(s);
    const auto fd = de.factor(s);
    CHECK((fs->solve(rhs) - fd->solve(rhs)).norm() <= 1e-9 * fd->solve(rhs).norm());
    CHECK((fs->solve_transpose(rhs) - fd->solve_transpose(rhs)).norm() <= 1e-9 * fd->solve_transpose(rhs).norm());
  }
}

TEST_CASE("IRKA on a heat model reproduces its DC gain closely") {
  GridConfig g;
  g.n_r = 21;
  g.n_z = 50;
  const FullOrderModel m(LayerStack{}, g);
  const AbsorptionScale al{0.7636, 0.0986};
  const Mat b = assemble_input(m, al);
  Mat c(2, m.size());
  c.row(0) = assemble_output_vol(m, al).transpose();
  c.row(1) = assemble_output_peak(m).transpose();
  const IrkaResult r = irka(SparseLti(m), b, c, 10);
  CHECK(r.stable);
  const DcGain full = dc_gain(m, al);
  const Mat red = -r.Cr * r.Ar.partialPivLu().solve(r.Br);
  CHECK(red(0, 0) == doctest::Approx(full.vol).epsilon(1e-3));
  CHECK(red(1, 0) == doctest::Approx(full.peak).epsilon(1e-3));
}
