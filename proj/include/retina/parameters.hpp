#pragma once

#include <array>
#include <string>

namespace retina {

/// Tissue layers along the beam (top to bottom), plus thermal constants.
/// Lengths in m, absorption in 1/m, SI material constants.
struct LayerStack {
  double d_retina = 190e-6;
  double d_rpe = 6e-6;
  double d_unpigmented = 4e-6;
  double d_choroid = 400e-6;
  double d_sclera = 139e-6;
  double mu_rpe = 1204e2;  // reference absorption of the RPE
  double mu_ch = 270e2;    // reference absorption of the choroid
  double rho = 993.0;
  double cp = 4176.0;
  double k = 0.627;

  void validate() const;
  double thickness() const { return d_retina + d_rpe + d_unpigmented + d_choroid + d_sclera; }
  double diffusivity() const { return k / (rho * cp); }
  double volumetric_heat_capacity() const { return rho * cp; }

  // Depths measured from the retina surface (z = 0), increasing along the beam.
  double rpe_top() const { return d_retina; }
  double rpe_center() const { return d_retina + 0.5 * d_rpe; }
  double rpe_bottom() const { return d_retina + d_rpe; }
  double choroid_top() const { return d_retina + d_rpe + d_unpigmented; }
  double choroid_bottom() const { return choroid_top() + d_choroid; }

  bool operator==(const LayerStack&) const = default;
};

/// Dimensionless prefactors of the literature absorption coefficients.
struct AbsorptionScale {
  double rpe = 1.0;
  double ch = 1.0;

  bool operator==(const AbsorptionScale&) const = default;
};

/// Admissible parameter box D.
struct ParameterDomain {
  double rpe_lo = 0.3821;
  double rpe_hi = 1.1451;
  double ch_lo = 0.0424;
  double ch_hi = 0.1549;

  void validate() const;
  bool contains(const AbsorptionScale& a, double tol = 1e-12) const;
  AbsorptionScale center() const { return {0.5 * (rpe_lo + rpe_hi), 0.5 * (ch_lo + ch_hi)}; }
  bool operator==(const ParameterDomain&) const = default;
};

/// Cohort statistics of the constant-power case study; used as defaults for
/// the expansion point, the fixed choroid value and one-sigma perturbations.
namespace reference {
inline constexpr AbsorptionScale mean_alpha{0.7636, 0.0986};
inline constexpr AbsorptionScale sigma_alpha{0.1907, 0.0281};
}  // namespace reference

/// Axisymmetric mesh and time step. Axial margins extend the domain above the
/// retina and below the sclera with non-absorbing tissue.
struct GridConfig {
  double radius = 1e-3;
  double beam_radius = 1e-4;
  double margin_top = 2e-4;
  double margin_bottom = 2e-4;
  int n_r = 61;
  int n_z = 81;
  double dt = 1e-3;

  void validate() const;
  bool operator==(const GridConfig&) const = default;
};

}  // namespace retina
