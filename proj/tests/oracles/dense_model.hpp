#pragma once

// Brute-force dense reference implementations used as test oracles.

#include "retina/model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace oracle {

// Flux-form discretization of (1/r)∂r(r ∂r) + ∂zz on the full node set
// (boundary nodes included), then restricted to the interior unknowns.
inline Eigen::MatrixXd dense_system_matrix(const retina::FullOrderModel& m) {
  const auto r = m.r_nodes();
  const auto z = m.z_nodes();
  const int nr = static_cast<int>(r.size());
  const int nz = static_cast<int>(z.size());
  const int full = nr * nz;
  auto id = [nr](int i, int j) { return i + nr * j; };
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(full, full);
  const double h = r[1] - r[0];
  for (int j = 1; j + 1 < nz; ++j) {
    const double hm = z[j] - z[j - 1];
    const double hp = z[j + 1] - z[j];
    for (int i = 0; i + 1 < nr; ++i) {
      const int row = id(i, j);
      if (i == 0) {
        L(row, id(1, j)) += 4.0 / (h * h);
        L(row, id(0, j)) -= 4.0 / (h * h);
      } else {
        const double rp = 0.5 * (r[i] + r[i + 1]);
        const double rm = 0.5 * (r[i] + r[i - 1]);
        L(row, id(i + 1, j)) += rp / (r[i] * h * h);
        L(row, id(i - 1, j)) += rm / (r[i] * h * h);
        L(row, id(i, j)) -= (rp + rm) / (r[i] * h * h);
      }
      const double zc = 0.5 * (hm + hp);
      L(row, id(i, j + 1)) += 1.0 / (hp * zc);
      L(row, id(i, j - 1)) += 1.0 / (hm * zc);
      L(row, id(i, j)) -= (1.0 / hp + 1.0 / hm) / zc;
    }
  }
  const int n = m.size();
  Eigen::MatrixXd A(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      A(a, b) = L(id(m.radial_node(a), m.axial_node(a)), id(m.radial_node(b), m.axial_node(b)));
  return m.layers().diffusivity() * A;
}

}  // namespace oracle
