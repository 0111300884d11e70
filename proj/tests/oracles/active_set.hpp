#pragma once

#include "retina/types.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>

namespace oracle {

struct BoxQpSolution {
  retina::Vec x;
  /// Bound multipliers with the solver's sign convention (Hx + q + y = 0).
  retina::Vec y;
  bool found = false;
};

// Enumerates all 3^n patterns (free / at lower / at upper) of
// min ½xᵀHx + qᵀx s.t. l ≤ x ≤ u and returns the pattern satisfying the full
// KKT conditions.
inline BoxQpSolution box_qp_exhaustive(const retina::Mat& h, const retina::Vec& q, const retina::Vec& l,
                                       const retina::Vec& u, double tol = 1e-10) {
  using retina::Mat;
  using retina::Vec;
  const int n = static_cast<int>(q.size());
  int patterns = 1;
  for (int i = 0; i < n; ++i) patterns *= 3;
  BoxQpSolution best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (int p = 0; p < patterns; ++p) {
    std::vector<int> state(n);
    int code = p;
    for (int i = 0; i < n; ++i) {
      state[i] = code % 3;
      code /= 3;
    }
    Vec x = Vec::Zero(n);
    std::vector<int> free;
    for (int i = 0; i < n; ++i) {
      if (state[i] == 1) x[i] = l[i];
      else if (state[i] == 2) x[i] = u[i];
      else free.push_back(i);
    }
    if (!free.empty()) {
      const int f = static_cast<int>(free.size());
      Mat hff(f, f);
      Vec rhs(f);
      for (int a = 0; a < f; ++a) {
        rhs[a] = -q[free[a]];
        for (int j = 0; j < n; ++j)
          if (state[j] != 0) rhs[a] -= h(free[a], j) * x[j];
        for (int b = 0; b < f; ++b) hff(a, b) = h(free[a], free[b]);
      }
      const Vec xf = hff.llt().solve(rhs);
      for (int a = 0; a < f; ++a) x[free[a]] = xf[a];
    }
    bool ok = true;
    for (int i = 0; i < n; ++i)
      if (x[i] < l[i] - tol || x[i] > u[i] + tol) ok = false;
    const Vec y = -(h * x + q);
    for (int i = 0; i < n && ok; ++i) {
      if (state[i] == 1 && y[i] > tol) ok = false;
      if (state[i] == 2 && y[i] < -tol) ok = false;
    }
    if (!ok) continue;
    const double obj = 0.5 * x.dot(h * x) + q.dot(x);
    if (obj < best_obj) {
      best_obj = obj;
      best.x = x;
      best.y = Vec::Zero(n);
      for (int i = 0; i < n; ++i)
        if (state[i] != 0) best.y[i] = y[i];
      best.found = true;
    }
  }
  return best;
}

}  // namespace oracle
