#include "retina/irka.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace retina {

namespace {

bool complex_less(const Complex& a, const Complex& b) {
  if (a.real() != b.real()) return a.real() < b.real();
  return a.imag() < b.imag();
}

// Treat shifts whose imaginary part is negligible as real, and pair the rest
// into conjugates (positive imaginary part first).
std::vector<Complex> clean_shifts(std::vector<Complex> s) {
  for (auto& v : s)
    if (std::abs(v.imag()) <= 1e-10 * std::abs(v)) v = {v.real(), 0.0};
  return s;
}

Complex perturbed(Complex s) { return s * (1.0 + 1e-8); }

std::unique_ptr<ShiftedSolver> factor_with_retry(const LtiOperator& a, Complex s) {
  try {
    return a.factor(s);
  } catch (const NumericalError&) {
    return a.factor(perturbed(s));
  }
}

// Real basis spanning the tangential interpolation directions. Each
// conjugate pair contributes its real and imaginary parts.
void build_bases(const LtiOperator& a, const Mat& b, const Mat& c, const std::vector<Complex>& shifts,
                 const CMat& bdir, const CMat& cdir, Mat& v, Mat& w) {
  const int d = static_cast<int>(shifts.size());
  const int n = a.size();
  v.resize(n, d);
  w.resize(n, d);
  const CMat bc = b.cast<Complex>();
  const CMat ctc = c.transpose().cast<Complex>();
  int col = 0;
  for (int i = 0; i < d; ++i) {
    const Complex s = shifts[i];
    if (s.imag() < 0.0) continue;  // handled with its conjugate
    auto f = factor_with_retry(a, s);
    const CVec vi = f->solve(bc * bdir.col(i)).col(0);
    const CVec wi = f->solve_transpose(ctc * cdir.col(i)).col(0);
    if (s.imag() == 0.0) {
      v.col(col) = vi.real();
      w.col(col) = wi.real();
      ++col;
    } else {
      v.col(col) = vi.real();
      w.col(col) = wi.real();
      if (col + 1 < d) {
        v.col(col + 1) = vi.imag();
        w.col(col + 1) = wi.imag();
      }
      col += 2;
    }
  }
  if (col < d) throw NumericalError("irka: unpaired complex shift");
}

double relative_change(std::vector<Complex> a, std::vector<Complex> b) {
  std::sort(a.begin(), a.end(), complex_less);
  std::sort(b.begin(), b.end(), complex_less);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a[i] - b[i]);
    den += std::norm(b[i]);
  }
  return std::sqrt(num / den);
}

}  // namespace

double ProjectionPair::biorthogonality_defect() const {
  return (W.transpose() * V - Mat::Identity(V.cols(), V.cols())).norm();
}

void biorthonormalize(ProjectionPair& pair) {
  const Mat g = pair.W.transpose() * pair.V;
  Eigen::FullPivLU<Mat> lu(g);
  if (!lu.isInvertible() || lu.rcond() < 1e-14) throw NumericalError("bi-orthonormalization: WᵀV is singular");
  pair.W = pair.W * lu.inverse().transpose();
}

Mat orthonormal_basis(const Mat& x) {
  Mat xs = x;
  for (Eigen::Index j = 0; j < xs.cols(); ++j) {
    const double nrm = xs.col(j).norm();
    if (nrm > 0.0) xs.col(j) /= nrm;
  }
  Eigen::ColPivHouseholderQR<Mat> qr(xs);
  qr.setThreshold(1e-14);
  if (qr.rank() < x.cols()) throw NumericalError("orthonormal basis: columns are linearly dependent");
  // undo the column pivoting so that leading columns span leading vectors
  Eigen::HouseholderQR<Mat> plain(xs);
  return plain.householderQ() * Mat::Identity(x.rows(), x.cols());
}

bool is_stable(const Mat& a) {
  if (a.size() == 0) return true;
  Eigen::EigenSolver<Mat> es(a, false);
  return es.eigenvalues().real().maxCoeff() < 0.0;
}

IrkaResult irka(const LtiOperator& a, const Mat& b, const Mat& c, int d, const IrkaOptions& opt) {
  const int n = a.size();
  if (d < 1 || d > n) throw std::invalid_argument("irka: need 1 <= d <= n");
  if (b.rows() != n || c.cols() != n) throw std::invalid_argument("irka: dimension mismatch");

  // initial shifts and tangential directions
  std::vector<Complex> shifts(d);
  for (int i = 0; i < d; ++i) {
    const double t = d == 1 ? 0.5 : static_cast<double>(i) / (d - 1);
    shifts[i] = std::pow(10.0, std::log10(opt.shift_min) + t * (std::log10(opt.shift_max) - std::log10(opt.shift_min)));
  }
  Eigen::JacobiSVD<Mat> sb(b, Eigen::ComputeThinV);
  Eigen::JacobiSVD<Mat> sc(c, Eigen::ComputeThinU);
  const Eigen::Index rb = std::max<Eigen::Index>(1, sb.nonzeroSingularValues());
  const Eigen::Index rc = std::max<Eigen::Index>(1, sc.nonzeroSingularValues());
  CMat bdir(b.cols(), d), cdir(c.rows(), d);
  for (int i = 0; i < d; ++i) {
    bdir.col(i) = sb.matrixV().col(i % rb).cast<Complex>();
    cdir.col(i) = sc.matrixU().col(i % rc).cast<Complex>();
  }

  IrkaResult res;
  for (int it = 1; it <= opt.max_iterations; ++it) {
    Mat v, w;
    build_bases(a, b, c, shifts, bdir, cdir, v, w);
    ProjectionPair pp{orthonormal_basis(v), orthonormal_basis(w)};
    biorthonormalize(pp);
    res.basis = pp;
    res.Ar = pp.W.transpose() * a.apply(pp.V);
    res.Br = pp.W.transpose() * b;
    res.Cr = c * pp.V;
    res.iterations = it;
    res.shifts = shifts;

    // real solver: eigenvectors of real eigenvalues come out real
    Eigen::EigenSolver<Mat> es(res.Ar);
    if (es.info() != Eigen::Success) throw NumericalError("irka: reduced eigenproblem failed");
    const CMat x = es.eigenvectors();
    const CVec lam = es.eigenvalues();
    Eigen::PartialPivLU<CMat> xlu(x);
    const CMat bt = xlu.solve(res.Br.cast<Complex>());  // rows: residue directions
    const CMat ct = res.Cr.cast<Complex>() * x;
    std::vector<Complex> next(d);
    // unstable reduced poles are reflected into the right half plane
    for (int i = 0; i < d; ++i) next[i] = {std::abs(lam[i].real()), -lam[i].imag()};
    next = clean_shifts(next);
    // order so that each conjugate pair is adjacent, positive part first
    std::vector<int> order(d);
    for (int i = 0; i < d; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int p, int q) {
      const Complex sp = next[p], sq = next[q];
      if (std::abs(sp.real() - sq.real()) > 1e-10 * std::max(std::abs(sp), std::abs(sq)))
        return sp.real() < sq.real();
      return sp.imag() > sq.imag();
    });
    std::vector<Complex> sorted(d);
    CMat nb(b.cols(), d), nc(c.rows(), d);
    for (int i = 0; i < d; ++i) {
      sorted[i] = next[order[i]];
      nb.col(i) = bt.row(order[i]).transpose();
      nc.col(i) = ct.col(order[i]);
    }
    // directions of a real shift are taken real
    for (int i = 0; i < d; ++i) {
      if (sorted[i].imag() == 0.0) {
        nb.col(i) = nb.col(i).real().cast<Complex>();
        nc.col(i) = nc.col(i).real().cast<Complex>();
      }
    }
    const double change = relative_change(sorted, shifts);
    shifts = sorted;
    bdir = nb;
    cdir = nc;
    if (change <= opt.tol) {
      res.converged = true;
      break;
    }
  }
  res.stable = is_stable(res.Ar);
  return res;
}

}  // namespace retina
