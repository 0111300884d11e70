#pragma once

#include "retina/absorption.hpp"
#include "retina/parameters.hpp"
#include "retina/types.hpp"

#include <array>
#include <span>
#include <vector>

namespace retina {

/// A state-vector entry written as a weighted sum of the absorbed density at
/// a few depths: entry(α) = scale * Σ weight_q * g^(order)(z_q).
/// Lets reduced models evaluate single rows of B(α) / columns of C(α)
/// without the full mesh.
struct DepthStencil {
  double scale = 0.0;
  std::vector<double> depth;
  std::vector<double> weight;

  double evaluate(const LayerStack& layers, const AbsorptionScale& alpha, DerivOrder order = {}) const;
};

/// Finite-difference discretization of the axisymmetric heat equation on the
/// (r, z) half-plane with homogeneous Dirichlet data at r = R and at the top
/// and bottom of the axial domain.
///
/// Unknowns are ordered radial-fastest: idx = i + (n_r - 1) * (j - 1) with
/// radial node i in [0, n_r - 2] and axial node j in [1, n_z - 2].
class FullOrderModel {
 public:
  FullOrderModel(const LayerStack& layers, const GridConfig& grid);

  const LayerStack& layers() const { return layers_; }
  const GridConfig& grid() const { return grid_; }

  int size() const { return static_cast<int>(mass_.size()); }
  int radial_unknowns() const { return grid_.n_r - 1; }
  int axial_unknowns() const { return grid_.n_z - 2; }
  int index(int i_r, int j_z) const { return i_r + radial_unknowns() * (j_z - 1); }
  int radial_node(int idx) const { return idx % radial_unknowns(); }
  int axial_node(int idx) const { return idx / radial_unknowns() + 1; }

  /// All mesh nodes including Dirichlet ones. z is depth from the retina
  /// surface (negative inside the top margin).
  std::span<const double> r_nodes() const { return r_; }
  std::span<const double> z_nodes() const { return z_; }

  /// A_c = k/(ρ C_p) Δ_h restricted to interior unknowns.
  const SpMat& system_matrix() const { return a_c_; }

  /// Positive diagonal M with M A_c symmetric (cylindrical volume weights).
  /// Every solve with A_c goes through the symmetric negative definite
  /// M A_c.
  const Vec& mass_weights() const { return mass_; }
  const SpMat& symmetric_operator() const { return m_a_c_; }

  /// Unknown on the axis at the centre of the RPE.
  int peak_index() const { return peak_index_; }

  /// Weights w_i with x_mean = Σ_i w_i x(r_i) (beam average over r ≤ R_I).
  std::span<const double> beam_average_weights() const { return beam_avg_; }
  /// Nodes lying inside the beam (χ(r_i) = 1).
  int beam_nodes() const { return beam_nodes_; }

  /// Axial quadrature of the beam average against g: for axial node j the
  /// depths/weights of the product rule ∫ φ_j(z) g(z) dz. Empty for nodes
  /// outside the absorbing layers.
  const DepthStencil& axial_output_stencil(int j_z) const { return axial_out_[j_z]; }

  DepthStencil input_stencil(int idx) const;
  DepthStencil output_vol_stencil(int idx) const;

 private:
  LayerStack layers_;
  GridConfig grid_;
  std::vector<double> r_;
  std::vector<double> z_;
  SpMat a_c_;
  SpMat m_a_c_;
  Vec mass_;
  int peak_index_ = -1;
  std::vector<double> beam_avg_;
  int beam_nodes_ = 0;
  std::vector<DepthStencil> axial_out_;
};

/// Number of mesh intervals assigned to each axial segment (top margin,
/// retina, RPE, unpigmented, choroid, sclera, bottom margin). Zero-length
/// margins get zero intervals.
std::array<int, 7> axial_intervals(const LayerStack& layers, const GridConfig& grid);

FullOrderModel build_model(const LayerStack& layers, const GridConfig& grid);

/// B(α) (or a partial derivative), K/(s·W).
Vec assemble_input(const FullOrderModel& model, const AbsorptionScale& alpha, Deriv deriv = Deriv::none);
Vec assemble_input(const FullOrderModel& model, const AbsorptionScale& alpha, DerivOrder order);

/// C_vol(α) as a column vector: y_vol = C_vol · x.
Vec assemble_output_vol(const FullOrderModel& model, const AbsorptionScale& alpha, Deriv deriv = Deriv::none);
Vec assemble_output_vol(const FullOrderModel& model, const AbsorptionScale& alpha, DerivOrder order);

/// Selection of the peak node; independent of α.
Vec assemble_output_peak(const FullOrderModel& model);

}  // namespace retina
