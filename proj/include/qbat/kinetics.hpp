#pragma once

#include <cmath>
#include <string>

#include "constants.hpp"
#include "errors.hpp"

namespace qbat {

/// Charge-transfer symmetry factors.
struct Symmetry {
  double anodic = 0.5;
  double cathodic = 0.5;
};

/// Exchange-current density, A/m^2:
/// i0 = i0_ref (c_e/c_e_ref)^a_a (c_s/c_max)^a_c (1 - c_s/c_max)^a_a.
inline double exchange_current(double i0_ref, double c_s_surf, double c_e, double c_e_ref, double c_max,
                               Symmetry s = {}) {
  if (!(c_s_surf > 0.0 && c_s_surf < c_max))
    throw KineticsError("surface concentration " + std::to_string(c_s_surf) + " outside (0, " +
                        std::to_string(c_max) + ")");
  if (!(c_e > 0.0)) throw KineticsError("electrolyte concentration must be positive");
  const double theta = c_s_surf / c_max;
  return i0_ref * std::pow(c_e / c_e_ref, s.anodic) * std::pow(theta, s.cathodic) *
         std::pow(1.0 - theta, s.anodic);
}

/// Molar flux (mol/m^2/s, positive = out of the solid) for a given exchange
/// current density.
inline double butler_volmer_rate(double i0, double overpotential, double T, Symmetry s = {}) {
  const double f = constants::kFaraday / (constants::kGas * T);
  return i0 / constants::kFaraday *
         (std::exp(s.anodic * f * overpotential) - std::exp(-s.cathodic * f * overpotential));
}

/// Butler-Volmer pore-wall flux with concentration-dependent exchange current.
inline double butler_volmer_flux(double i0_ref, double c_s_surf, double c_e, double c_e_ref, double c_max,
                                 double overpotential, double T, Symmetry s = {}) {
  if (!(T > 0.0)) throw KineticsError("temperature must be positive");
  return butler_volmer_rate(exchange_current(i0_ref, c_s_surf, c_e, c_e_ref, c_max, s), overpotential, T, s);
}

/// Bulk electrolyte conductivity (S/m) of LiPF6 in carbonate solvent as a
/// cubic in concentration (mol/L), floored to stay positive.
inline double electrolyte_conductivity(double c_e, double* derivative = nullptr) {
  const double c = c_e * 1e-3;
  const double k = 0.0911 + 1.9101 * c - 1.052 * c * c + 0.1554 * c * c * c;
  constexpr double floor = 1e-3;
  if (k < floor) {
    if (derivative) *derivative = 0.0;
    return floor;
  }
  if (derivative) *derivative = (1.9101 - 2.104 * c + 0.4662 * c * c) * 1e-3;
  return k;
}

}  // namespace qbat
