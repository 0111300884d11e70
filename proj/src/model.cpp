#include "retina/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace retina {

namespace {

// Segment order along the beam.
enum Segment { kMarginTop, kRetina, kRpe, kUnpigmented, kChoroid, kSclera, kMarginBottom, kSegments };

// Relative mesh density per segment: the RPE and unpigmented layer are much
// thinner than the thermal length scale but carry the steepest source
// gradients.
constexpr std::array<double, kSegments> kDensity = {0.5, 1.0, 20.0, 10.0, 1.0, 0.5, 0.5};

// 4-point Gauss-Legendre on [-1, 1].
constexpr std::array<double, 4> kGaussX = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                                           0.8611363115940526};
constexpr std::array<double, 4> kGaussW = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                           0.3478548451374538};

std::array<double, kSegments + 1> segment_bounds(const LayerStack& layers, const GridConfig& grid) {
  return {-grid.margin_top,     0.0,
          layers.rpe_top(),     layers.rpe_bottom(),
          layers.choroid_top(), layers.choroid_bottom(),
          layers.thickness(),   layers.thickness() + grid.margin_bottom};
}

bool is_absorbing(Tissue t) { return t == Tissue::rpe || t == Tissue::choroid; }

constexpr double kMaxGrowth = 1.3;

// Node offsets of a segment of length len split into `count` intervals that
// grow geometrically away from one end, starting near h_min (ratio capped).
std::vector<double> graded_offsets(double len, int count, double h_min, bool fine_at_end) {
  std::vector<double> off(count);
  auto total = [count](double q) {
    double s = 0.0, h = 1.0;
    for (int m = 0; m < count; ++m, h *= q) s += h;
    return s;
  };
  double q = 1.0;
  if (len / count > h_min && count > 1) {
    double lo = 1.0, hi = kMaxGrowth;
    if (len / total(hi) < h_min) {
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        (len / total(mid) > h_min ? lo : hi) = mid;
      }
    } else {
      lo = hi;
    }
    q = lo;
  }
  std::vector<double> h(count);
  const double h0 = len / total(q);
  for (int m = 0; m < count; ++m) h[m] = h0 * std::pow(q, m);
  if (fine_at_end) std::reverse(h.begin(), h.end());
  double acc = 0.0;
  for (int m = 0; m < count; ++m) {
    off[m] = acc;
    acc += h[m];
  }
  return off;
}

}  // namespace

std::array<int, 7> axial_intervals(const LayerStack& layers, const GridConfig& grid) {
  const auto bounds = segment_bounds(layers, grid);
  std::array<double, kSegments> length{};
  std::array<int, kSegments> count{};
  int used = 0;
  for (int s = 0; s < kSegments; ++s) {
    length[s] = bounds[s + 1] - bounds[s];
    if (length[s] > 0) count[s] = (s == kRpe) ? 2 : 1;
    used += count[s];
  }
  int remaining = grid.n_z - 1 - used;
  if (remaining < 0) throw std::invalid_argument("grid: n_z too small for the layer stack");
  // Greedy refinement of the coarsest segment (relative to its density);
  // the RPE is refined in pairs so that its centre stays a node.
  while (remaining > 0) {
    int best = -1;
    double best_h = -1.0;
    for (int s = 0; s < kSegments; ++s) {
      if (count[s] == 0) continue;
      if (s == kRpe && remaining < 2) continue;
      const double h = length[s] * kDensity[s] / count[s];
      if (h > best_h) {
        best_h = h;
        best = s;
      }
    }
    const int add = (best == kRpe) ? 2 : 1;
    count[best] += add;
    remaining -= add;
  }
  return count;
}

double DepthStencil::evaluate(const LayerStack& layers, const AbsorptionScale& alpha, DerivOrder order) const {
  double sum = 0.0;
  for (std::size_t q = 0; q < depth.size(); ++q) sum += weight[q] * absorbed_density(layers, alpha, depth[q], order);
  return scale * sum;
}

FullOrderModel::FullOrderModel(const LayerStack& layers, const GridConfig& grid) : layers_(layers), grid_(grid) {
  layers_.validate();
  grid_.validate();

  // Axial mesh, uniform per segment except for the retina and sclera, which
  // are graded towards the adjacent absorbing layer. Every segment boundary
  // is a node.
  const auto bounds = segment_bounds(layers_, grid_);
  const auto count = axial_intervals(layers_, grid_);
  auto spacing = [&](int s) { return (bounds[s + 1] - bounds[s]) / count[s]; };
  z_.clear();
  for (int s = 0; s < kSegments; ++s) {
    if (count[s] == 0) continue;
    const double len = bounds[s + 1] - bounds[s];
    std::vector<double> off;
    if (s == kRetina) {
      off = graded_offsets(len, count[s], spacing(kRpe), true);
    } else if (s == kSclera) {
      off = graded_offsets(len, count[s], spacing(kChoroid), false);
    } else {
      for (int m = 0; m < count[s]; ++m) off.push_back(len * static_cast<double>(m) / count[s]);
    }
    for (double o : off) z_.push_back(bounds[s] + o);
  }
  z_.push_back(bounds[kSegments]);
  for (std::size_t j = 1; j < z_.size(); ++j) {
    if (!(z_[j] > z_[j - 1])) throw std::invalid_argument("grid: axial mesh is not strictly increasing");
  }
  for (int s = kRetina; s <= kSclera; ++s) {
    if (count[s] < 1) throw std::invalid_argument("grid: a tissue layer received no mesh interval");
  }

  const int nr = grid_.n_r;
  const double hr = grid_.radius / (nr - 1);
  r_.resize(nr);
  for (int i = 0; i < nr; ++i) r_[i] = grid_.radius * static_cast<double>(i) / (nr - 1);

  const int nru = radial_unknowns();
  const int nzu = axial_unknowns();
  const int n = nru * nzu;
  const double kappa = layers_.diffusivity();

  // Volume weights making the stencil symmetric: radial r_i (h/8 on the
  // axis), axial dual-cell length.
  std::vector<double> wr(nru), wz(nzu);
  for (int i = 0; i < nru; ++i) wr[i] = (i == 0) ? 0.125 : static_cast<double>(i);
  double wz_max = 0.0;
  for (int j = 1; j <= nzu; ++j) {
    wz[j - 1] = 0.5 * (z_[j + 1] - z_[j - 1]);
    wz_max = std::max(wz_max, wz[j - 1]);
  }
  mass_.resize(n);
  const double wr_max = std::max(1.0, static_cast<double>(nru - 1));
  for (int j = 1; j <= nzu; ++j)
    for (int i = 0; i < nru; ++i) mass_[index(i, j)] = (wr[i] / wr_max) * (wz[j - 1] / wz_max);

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(5) * n);
  const double inv_hr2 = 1.0 / (hr * hr);
  for (int j = 1; j <= nzu; ++j) {
    const double hm = z_[j] - z_[j - 1];
    const double hp = z_[j + 1] - z_[j];
    const double c_dn = 2.0 / (hm * (hm + hp));
    const double c_up = 2.0 / (hp * (hm + hp));
    for (int i = 0; i < nru; ++i) {
      const int row = index(i, j);
      double diag = -(c_dn + c_up);
      if (j - 1 >= 1) trip.emplace_back(row, index(i, j - 1), kappa * c_dn);
      if (j + 1 <= nzu) trip.emplace_back(row, index(i, j + 1), kappa * c_up);
      if (i == 0) {
        // 2 ∂rr on the axis with the mirror node x_{-1} = x_1
        diag -= 4.0 * inv_hr2;
        if (nru > 1) trip.emplace_back(row, index(1, j), kappa * 4.0 * inv_hr2);
      } else {
        const double half = 0.5 / static_cast<double>(i);
        diag -= 2.0 * inv_hr2;
        trip.emplace_back(row, index(i - 1, j), kappa * (1.0 - half) * inv_hr2);
        if (i + 1 < nru) trip.emplace_back(row, index(i + 1, j), kappa * (1.0 + half) * inv_hr2);
      }
      trip.emplace_back(row, row, kappa * diag);
    }
  }
  a_c_.resize(n, n);
  a_c_.setFromTriplets(trip.begin(), trip.end());
  a_c_.makeCompressed();
  m_a_c_ = mass_.asDiagonal() * a_c_;
  SpMat sym_t = m_a_c_.transpose();
  m_a_c_ = 0.5 * (m_a_c_ + sym_t);
  m_a_c_.makeCompressed();

  // Peak output: on the axis at the RPE centre.
  const double zc = layers_.rpe_center();
  int jc = 1;
  for (int j = 1; j <= nzu; ++j)
    if (std::abs(z_[j] - zc) < std::abs(z_[jc] - zc)) jc = j;
  const double half_cell = 0.5 * std::min(z_[jc] - z_[jc - 1], z_[jc + 1] - z_[jc]);
  if (std::abs(z_[jc] - zc) > half_cell) throw std::invalid_argument("grid: no node near the RPE centre");
  peak_index_ = index(0, jc);

  // Beam average (2/R_I²) ∫_0^{R_I} r x(r) dr, trapezoidal in r·x.
  const double ri = grid_.beam_radius;
  beam_avg_.assign(nru, 0.0);
  int m = static_cast<int>(std::floor(ri / hr * (1.0 + 1e-12)));
  m = std::min(m, nru - 1);
  for (int i = 1; i < m; ++i) beam_avg_[i] += hr * r_[i];
  if (m >= 1) beam_avg_[m] += 0.5 * hr * r_[m];
  const double rest = ri - r_[m];
  if (rest > 1e-12 * ri) {
    const double theta = rest / hr;
    beam_avg_[m] += 0.5 * rest * (r_[m] + ri * (1.0 - theta));
    if (m + 1 < nru) beam_avg_[m + 1] += 0.5 * rest * ri * theta;
  }
  for (double& w : beam_avg_) w *= 2.0 / (ri * ri);
  beam_nodes_ = m + 1;

  // Product quadrature of hat functions against g over absorbing cells.
  axial_out_.assign(z_.size(), DepthStencil{});
  for (int j = 1; j <= nzu; ++j) {
    DepthStencil& st = axial_out_[j];
    st.scale = 1.0;
    for (int side = 0; side < 2; ++side) {
      const double za = side == 0 ? z_[j - 1] : z_[j];
      const double zb = side == 0 ? z_[j] : z_[j + 1];
      const double mid = 0.5 * (za + zb);
      const double half = 0.5 * (zb - za);
      if (!is_absorbing(tissue_at(layers_, mid))) continue;
      for (int q = 0; q < 4; ++q) {
        const double zq = mid + half * kGaussX[q];
        const double hat = side == 0 ? (zq - za) / (zb - za) : (zb - zq) / (zb - za);
        st.depth.push_back(zq);
        st.weight.push_back(kGaussW[q] * half * hat);
      }
    }
  }
}

DepthStencil FullOrderModel::input_stencil(int idx) const {
  DepthStencil st;
  const int i = radial_node(idx);
  const int j = axial_node(idx);
  const double ri = grid_.beam_radius;
  st.scale = (i < beam_nodes_) ? 1.0 / (layers_.volumetric_heat_capacity() * std::numbers::pi * ri * ri) : 0.0;
  st.depth = {z_[j]};
  st.weight = {1.0};
  return st;
}

DepthStencil FullOrderModel::output_vol_stencil(int idx) const {
  DepthStencil st = axial_out_[axial_node(idx)];
  st.scale *= beam_avg_[radial_node(idx)];
  return st;
}

FullOrderModel build_model(const LayerStack& layers, const GridConfig& grid) { return FullOrderModel(layers, grid); }

Vec assemble_input(const FullOrderModel& model, const AbsorptionScale& alpha, DerivOrder order) {
  Vec b = Vec::Zero(model.size());
  const auto z = model.z_nodes();
  const double ri = model.grid().beam_radius;
  const double scale = 1.0 / (model.layers().volumetric_heat_capacity() * std::numbers::pi * ri * ri);
  for (int j = 1; j <= model.axial_unknowns(); ++j) {
    const double g = absorbed_density(model.layers(), alpha, z[j], order);
    if (g == 0.0) continue;
    for (int i = 0; i < model.beam_nodes(); ++i) b[model.index(i, j)] = scale * g;
  }
  return b;
}

Vec assemble_input(const FullOrderModel& model, const AbsorptionScale& alpha, Deriv deriv) {
  return assemble_input(model, alpha, to_order(deriv));
}

Vec assemble_output_vol(const FullOrderModel& model, const AbsorptionScale& alpha, DerivOrder order) {
  Vec c = Vec::Zero(model.size());
  const auto w = model.beam_average_weights();
  for (int j = 1; j <= model.axial_unknowns(); ++j) {
    const DepthStencil& st = model.axial_output_stencil(j);
    if (st.depth.empty()) continue;
    const double g = st.evaluate(model.layers(), alpha, order);
    for (int i = 0; i < model.radial_unknowns(); ++i) {
      if (w[i] != 0.0) c[model.index(i, j)] = w[i] * g;
    }
  }
  return c;
}

Vec assemble_output_vol(const FullOrderModel& model, const AbsorptionScale& alpha, Deriv deriv) {
  return assemble_output_vol(model, alpha, to_order(deriv));
}

Vec assemble_output_peak(const FullOrderModel& model) {
  Vec c = Vec::Zero(model.size());
  c[model.peak_index()] = 1.0;
  return c;
}

}  // namespace retina
