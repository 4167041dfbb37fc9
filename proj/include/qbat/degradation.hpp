#pragma once

// Side-reaction and mechanical ageing laws. Every function here is a pure
// increment: callers own the state and decide when to apply it.

#include <algorithm>
#include <cmath>
#include <span>

#include "constants.hpp"
#include "mesh.hpp"
#include "parameters.hpp"

namespace qbat {

/// Counts stress reversals larger than a hysteresis band. Each completed
/// half-cycle reports its amplitude |peak - valley| / 2.
class HalfCycleCounter {
public:
  HalfCycleCounter() = default;
  explicit HalfCycleCounter(double hysteresis) : band_(hysteresis) {}

  /// Feeds one sample; returns the amplitude of a half-cycle completed by it,
  /// or 0 when none completed.
  double feed(double s) {
    if (!started_) {
      started_ = true;
      anchor_ = extreme_ = s;
      return 0.0;
    }
    if (dir_ == 0) {
      if (std::abs(s - anchor_) > band_) {
        dir_ = s > anchor_ ? 1 : -1;
        extreme_ = s;
      }
      return 0.0;
    }
    if ((dir_ > 0 && s >= extreme_) || (dir_ < 0 && s <= extreme_)) {
      extreme_ = s;
      return 0.0;
    }
    if (std::abs(extreme_ - s) > band_) {
      const double amplitude = 0.5 * std::abs(extreme_ - anchor_);
      anchor_ = extreme_;
      extreme_ = s;
      dir_ = -dir_;
      ++count_;
      return amplitude;
    }
    return 0.0;
  }

  long count() const { return count_; }

private:
  double band_ = 0.0;
  bool started_ = false;
  int dir_ = 0;
  double anchor_ = 0.0;
  double extreme_ = 0.0;
  long count_ = 0;
};

/// Lumped ageing state of one cell. Thicknesses and crack quantities refer to
/// the negative electrode unless suffixed `_p`.
struct DegradationState {
  double L_sei_nom = 0.0;    // m
  double L_sei_crack = 0.0;  // m, mean over the crack area
  double a_crack = 0.0;      // 1/m
  double l_crack = 0.0;      // m
  double q_plated = 0.0;     // mol per m^3 of negative electrode
  double eps_am_p = 0.0;
  double eps_am_n = 0.0;
  double eps_am_p_init = 0.0;
  double eps_am_n_init = 0.0;
  double li_lost_sei_nom = 0.0;    // mol
  double li_lost_sei_crack = 0.0;  // mol
  double li_lost_plating = 0.0;    // mol
  double li_trapped = 0.0;         // mol held in isolated active material
  long n_half_cycles = 0;
  double l_crack_p = 0.0;
  long n_half_cycles_p = 0;
  HalfCycleCounter counter_n{};
  HalfCycleCounter counter_p{};

  static DegradationState fresh(const ParameterSet& p) {
    DegradationState s;
    const auto& d = p.degradation;
    s.L_sei_nom = d.L_sei_init;
    s.l_crack = d.l_crack_init;
    s.l_crack_p = d.l_crack_init;
    s.eps_am_p = s.eps_am_p_init = p.eps_am_p();
    s.eps_am_n = s.eps_am_n_init = p.eps_am_n();
    s.counter_n = HalfCycleCounter(0.01 * d.sigma_crit);
    s.counter_p = HalfCycleCounter(0.01 * d.sigma_crit);
    return s;
  }

  double li_lost_total() const { return li_lost_sei_nom + li_lost_sei_crack + li_lost_plating; }
  double eps_am(Electrode e) const { return e == Electrode::Positive ? eps_am_p : eps_am_n; }
};

enum class SeiSurface { Nominal, Crack };

struct SeiIncrement {
  double dL = 0.0;   // m
  double dli = 0.0;  // mol
};

/// SEI film resistance (Ohm m^2) for the current nominal thickness.
inline double film_resistance(const ParameterSet& p, const DegradationState& s) {
  const auto& d = p.degradation;
  return p.R_SEI + std::max(0.0, s.L_sei_nom - d.L_sei_init) / d.kappa_sei;
}

/// Growth-rate prefactor K (m/s) such that dL/dt = K / (1 + L/L_diff).
inline double sei_rate_constant(const DegradationParams& d, double T, double overpotential) {
  const double RT = constants::kGas * T;
  return d.k_sei * std::exp(-d.Ea_sei / constants::kGas * (1.0 / T - 1.0 / d.T_ref)) *
         std::exp(-d.alpha_sei * constants::kFaraday * overpotential / RT);
}

/// Thickness after `dt` at constant K, from the exact solution of
/// dL/dt = K / (1 + L/L_diff):  L + L^2/(2 L_diff) grows linearly in time.
inline double sei_thickness_after(double L, double K, double L_diff, double dt) {
  const double u = 1.0 + L / L_diff;
  return L_diff * (std::sqrt(u * u + 2.0 * K * dt / L_diff) - 1.0);
}

/// SEI growth on one surface of the negative electrode over `dt` at a local
/// SEI overpotential. Lithium consumed is dL * a * A_cell * L_n * rho/M.
inline SeiIncrement sei_growth_step(const DegradationState& s, const ParameterSet& p, double T,
                                    double local_overpotential, SeiSurface surface, double dt) {
  const auto& d = p.degradation;
  const double L = surface == SeiSurface::Nominal ? s.L_sei_nom : s.L_sei_crack;
  const double area = surface == SeiSurface::Nominal
                          ? p.a_n * s.eps_am_n / s.eps_am_n_init
                          : s.a_crack;
  if (d.k_sei == 0.0 || dt <= 0.0) return {};
  const double K = sei_rate_constant(d, T, local_overpotential);
  const double dL = std::max(0.0, sei_thickness_after(L, K, d.L_diff, dt) - L);
  return {dL, dL * area * p.A_cell * p.L_n * d.rho_sei / d.M_sei};
}

/// Plated lithium (mol per m^3 of electrode) over `dt`. Active only when the
/// anode interfacial potential vs Li/Li+ is negative.
inline double plating_step(const DegradationState& s, const ParameterSet& p,
                           double anode_potential_vs_li, double T, double dt) {
  if (!(anode_potential_vs_li < 0.0) || dt <= 0.0) return 0.0;
  const auto& d = p.degradation;
  const double f = constants::kFaraday / (constants::kGas * T);
  const double drive = -anode_potential_vs_li;
  const double rate = d.i0_plating / constants::kFaraday *
                      (std::exp(d.alpha_plating * f * drive) - std::exp(-(1.0 - d.alpha_plating) * f * drive));
  const double area = p.a_n * s.eps_am_n / s.eps_am_n_init;
  return std::max(0.0, rate * area * dt);
}

/// Tangential surface stress (Pa) of a spherical particle from its mean and
/// surface concentrations. Positive = tension.
inline double surface_stress(double c_mean, double c_surf, const ParameterSet& p, Electrode e) {
  return p.molar_volume(e) * p.young(e) / (3.0 * (1.0 - p.poisson(e))) * (c_mean - c_surf);
}

/// Same, from a shell profile. The surface value is extrapolated linearly
/// from the two outermost shells.
inline double surface_stress(std::span<const double> shells, const ShellGrid& grid, const ParameterSet& p,
                             Electrode e) {
  const int n = grid.n;
  const double mean = grid.mean(shells.data());
  const double slope = (shells[n - 1] - shells[n - 2]) / grid.dr;
  const double surf = shells[n - 1] + 0.5 * grid.dr * slope;
  return surface_stress(mean, surf, p, e);
}

struct CrackIncrement {
  double dl = 0.0;  // m
  double da = 0.0;  // 1/m
};

/// Paris-law growth for one detected stress half-cycle: half of
/// k_cr * amplitude^m_cr, so a full cycle adds k_cr * amplitude^m_cr.
inline CrackIncrement crack_growth_step(double stress_amplitude, const ParameterSet& p) {
  const auto& d = p.degradation;
  if (!(stress_amplitude > 0.0)) return {};
  const double dl = 0.5 * d.k_cr * std::pow(stress_amplitude, d.m_cr);
  return {dl, d.crack_area_per_length * dl};
}

/// Active-material fraction change over `dt` (always <= 0), never driving
/// `eps_am` below zero.
inline double lam_step(double eps_am, double stress, const ParameterSet& p, double dt) {
  const auto& d = p.degradation;
  if (!(stress > d.sigma_crit) || eps_am <= 0.0) return 0.0;
  const double excess = (stress - d.sigma_crit) / d.sigma_crit;
  return -std::min(eps_am, d.beta_lam * std::pow(excess, d.m_lam) * dt);
}

/// Mean crack-surface SEI thickness after adding fresh (bare) crack area.
inline double merge_crack_sei(double L_crack, double a_old, double da) {
  const double a_new = a_old + da;
  return a_new > 0.0 ? L_crack * a_old / a_new : 0.0;
}

inline double compute_lli(const DegradationState& s, double initial_inventory) {
  return s.li_lost_total() / initial_inventory;
}

struct LamFractions {
  double positive = 0.0;
  double negative = 0.0;
};

inline LamFractions compute_lam(const DegradationState& s) {
  return {1.0 - s.eps_am_p / s.eps_am_p_init, 1.0 - s.eps_am_n / s.eps_am_n_init};
}

}  // namespace qbat
