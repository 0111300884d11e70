#include "retina/parameters.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace retina {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

void LayerStack::validate() const {
  require(d_retina > 0 && d_rpe > 0 && d_unpigmented > 0 && d_choroid > 0 && d_sclera > 0,
          "layers: all thicknesses must be positive");
  require(mu_rpe >= 0 && mu_ch >= 0, "layers: absorption references must be non-negative");
  require(rho > 0 && cp > 0 && k > 0, "material: rho, cp and k must be positive");
}

void ParameterDomain::validate() const {
  require(rpe_lo > 0 && rpe_lo < rpe_hi, "alpha_domain: need 0 < rpe_min < rpe_max");
  require(ch_lo >= 0 && ch_lo < ch_hi, "alpha_domain: need 0 <= ch_min < ch_max");
}

bool ParameterDomain::contains(const AbsorptionScale& a, double tol) const {
  return a.rpe >= rpe_lo - tol && a.rpe <= rpe_hi + tol && a.ch >= ch_lo - tol && a.ch <= ch_hi + tol;
}

void GridConfig::validate() const {
  require(beam_radius > 0 && beam_radius < radius, "grid: need 0 < beam_radius < radius");
  require(margin_top >= 0 && margin_bottom >= 0, "grid: margins must be non-negative");
  require(n_r >= 3, "grid: n_r must be at least 3");
  const int segments = 5 + (margin_top > 0 ? 1 : 0) + (margin_bottom > 0 ? 1 : 0);
  // one interval per segment, two for the RPE so that its centre is a node
  require(n_z >= segments + 2, "grid: n_z must be at least " + std::to_string(segments + 2) +
                                   " (number of axial segments + 2)");
  require(dt > 0, "grid: dt must be positive");
}

}  // namespace retina
