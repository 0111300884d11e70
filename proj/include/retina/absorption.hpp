#pragma once

#include "retina/parameters.hpp"

namespace retina {

enum class Tissue { none, retina, rpe, unpigmented, choroid, sclera };

/// Which partial derivative of an α-dependent operator to assemble.
enum class Deriv { none, d_rpe, d_ch };

/// Derivative orders (∂^rpe/∂α_rpe ∂^ch/∂α_ch).
struct DerivOrder {
  int rpe = 0;
  int ch = 0;
};

DerivOrder to_order(Deriv d);

/// Tissue at depth z (from the retina surface). Absorbing layers are closed
/// intervals, so nodes on an absorbing/non-absorbing interface report the
/// absorbing layer.
Tissue tissue_at(const LayerStack& layers, double z);

/// Absorption coefficient μ(z) in 1/m.
double absorption_profile(const LayerStack& layers, const AbsorptionScale& alpha, double z);

/// Absorbed power density per unit incident fluence,
///   g(z) = μ(z) exp(-∫ μ),
/// with the optical depth accumulated from the top of the RPE, together with
/// its mixed partial derivatives of arbitrary order in (α_rpe, α_ch).
double absorbed_density(const LayerStack& layers, const AbsorptionScale& alpha, double z,
                        DerivOrder order = {});

}  // namespace retina
