#include "retina/absorption.hpp"

#include <cmath>

namespace retina {

namespace {

// ∂^i/∂a^i [a exp(-c a)] = (-c)^(i-1) exp(-c a) (i - c a) for i >= 1.
double scaled_exponential_derivative(double a, double c, int i) {
  const double e = std::exp(-c * a);
  if (i == 0) return a * e;
  double p = 1.0;
  for (int m = 1; m < i; ++m) p *= -c;
  return p * e * (static_cast<double>(i) - c * a);
}

}  // namespace

DerivOrder to_order(Deriv d) {
  switch (d) {
    case Deriv::d_rpe: return {1, 0};
    case Deriv::d_ch: return {0, 1};
    case Deriv::none: break;
  }
  return {};
}

Tissue tissue_at(const LayerStack& layers, double z) {
  if (z < 0.0 || z > layers.thickness()) return Tissue::none;
  if (z >= layers.rpe_top() && z <= layers.rpe_bottom()) return Tissue::rpe;
  if (z >= layers.choroid_top() && z <= layers.choroid_bottom()) return Tissue::choroid;
  if (z < layers.rpe_top()) return Tissue::retina;
  if (z < layers.choroid_top()) return Tissue::unpigmented;
  return Tissue::sclera;
}

double absorption_profile(const LayerStack& layers, const AbsorptionScale& alpha, double z) {
  switch (tissue_at(layers, z)) {
    case Tissue::rpe: return alpha.rpe * layers.mu_rpe;
    case Tissue::choroid: return alpha.ch * layers.mu_ch;
    default: return 0.0;
  }
}

double absorbed_density(const LayerStack& layers, const AbsorptionScale& alpha, double z, DerivOrder order) {
  switch (tissue_at(layers, z)) {
    case Tissue::rpe: {
      if (order.ch > 0) return 0.0;
      const double s = z - layers.rpe_top();
      return layers.mu_rpe * scaled_exponential_derivative(alpha.rpe, layers.mu_rpe * s, order.rpe);
    }
    case Tissue::choroid: {
      const double t = z - layers.choroid_top();
      // attenuation through the full RPE; the unpigmented layer is transparent
      const double depth_rpe = layers.mu_rpe * layers.d_rpe;
      double through_rpe = std::exp(-alpha.rpe * depth_rpe);
      for (int m = 0; m < order.rpe; ++m) through_rpe *= -depth_rpe;
      return through_rpe * layers.mu_ch * scaled_exponential_derivative(alpha.ch, layers.mu_ch * t, order.ch);
    }
    default: return 0.0;
  }
}

}  // namespace retina
