#pragma once

// Cell, pack and degradation parameters plus their flat JSON representation.
//
// Defaults describe a representative high-rate 2.2 Ah graphite/NMC pouch cell
// in a 4S1P pack. Electrode thicknesses, plate area, maximum concentrations
// and every degradation rate constant are plausible placeholders meant to be
// calibrated, not measured values of a specific cell.

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "constants.hpp"
#include "errors.hpp"

namespace qbat {

enum class Electrode { Positive, Negative };

inline std::string_view to_string(Electrode e) { return e == Electrode::Positive ? "pos" : "neg"; }

/// Independent switches for the degradation sub-models.
struct DegradationToggles {
  bool sei_nominal = true;
  bool sei_crack = true;
  bool plating = true;
  bool cracking = true;
  bool lam = true;
  /// Apply cracking/LAM to the positive electrode as well (negative only by default).
  bool mechanics_positive = false;

  static DegradationToggles all_off() { return {false, false, false, false, false, false}; }
  bool any() const { return sei_nominal || sei_crack || plating || cracking || lam; }
};

/// Rate constants of the side-reaction and mechanical sub-models.
struct DegradationParams {
  // SEI growth, solvent-diffusion-limited kinetics.
  double k_sei = 3.0e-15;       // m/s at T_ref and zero SEI overpotential
  double Ea_sei = 3.0e4;        // J/mol
  double alpha_sei = 0.5;
  double U_sei = 0.4;           // V vs Li/Li+
  double L_sei_init = 5.0e-9;   // m
  double L_diff = 5.0e-9;       // m, thickness at which diffusion halves the rate
  double rho_sei = 1690.0;      // kg/m^3
  double M_sei = 0.162;         // kg/mol
  double kappa_sei = 5.0e-6;    // S/m, ionic conductivity of the grown film
  double T_ref = 298.15;        // K
  // Lithium plating.
  double i0_plating = 1.0e-3;   // A/m^2
  double alpha_plating = 0.5;
  // Paris-law cracking.
  double k_cr = 2.0e-23;        // m per cycle per Pa^m_cr
  double m_cr = 2.0;
  double crack_area_per_length = 2.0e11;  // 1/m^2, crack area density gained per metre of growth
  double l_crack_init = 2.0e-8;           // m
  // Threshold loss of active material.
  double sigma_crit = 1.2e7;    // Pa
  double beta_lam = 2.0e-6;     // 1/s
  double m_lam = 1.0;

  DegradationToggles toggles{};
};

/// Electrochemical, thermal and pack parameters. Keys of the flat JSON form
/// are the member names.
struct ParameterSet {
  // Stoichiometry windows.
  double theta_p_max = 0.9084;
  double theta_p_min = 0.2661;
  double theta_n_max = 0.9014;
  double theta_n_min = 0.0279;
  // Particles and solid phase.
  double R_p = 2.5e-6;
  double R_n = 3.0e-6;
  double sigma_p = 10.0;
  double sigma_n = 100.0;
  // Volume fractions; active fraction = 1 - eps - eps_f.
  double eps_p = 0.33;
  double eps_sep = 0.5;
  double eps_n = 0.33;
  double eps_f_p = 0.04;
  double eps_f_n = 0.02;
  double a_p = 7.56e5;
  double a_n = 6.5e5;
  // Transport.
  double D_e = 3.5e-10;
  double D_p = 5.0e-14;
  double D_n = 1.0e-13;
  double c_e_init = 1200.0;
  // Kinetics.
  double i0_p_ref = 5.0;
  double i0_n_ref = 2.5;
  double R_SEI = 2.0e-3;
  // Mechanics.
  double nu_p = 0.2;
  double nu_n = 0.3;
  double E_p = 3.75e11;
  double E_n = 1.5e10;
  double V_p = 1.0e-6;
  double V_n = 3.1e-6;
  double V_Li = 1.3e-5;
  // Fixed geometry and physics.
  double L_p = 34e-6;
  double L_sep = 15e-6;
  double L_n = 45e-6;
  double A_cell = 0.097;
  double c_p_max = 63104.0;
  double c_n_max = 33133.0;
  double t_plus = 0.363;
  double bruggeman = 1.5;
  double T_amb = 298.15;
  double thermal_mass = 50.0;    // J/K per cell
  double heat_transfer = 0.5;    // W/K per cell
  double Q_rated = 2.2;          // Ah
  double V_nominal = 3.7;        // V per cell, for coarse energy estimates
  int n_series = 4;

  DegradationParams degradation{};

  double eps_am_p() const { return 1.0 - eps_p - eps_f_p; }
  double eps_am_n() const { return 1.0 - eps_n - eps_f_n; }
  double one_c_current() const { return Q_rated; }
  double pack_nominal_voltage() const { return V_nominal * n_series; }

  double radius(Electrode e) const { return e == Electrode::Positive ? R_p : R_n; }
  double c_max(Electrode e) const { return e == Electrode::Positive ? c_p_max : c_n_max; }
  double diffusivity(Electrode e) const { return e == Electrode::Positive ? D_p : D_n; }
  double thickness(Electrode e) const { return e == Electrode::Positive ? L_p : L_n; }
  double surface_area(Electrode e) const { return e == Electrode::Positive ? a_p : a_n; }
  double eps_am(Electrode e) const { return e == Electrode::Positive ? eps_am_p() : eps_am_n(); }
  double i0_ref(Electrode e) const { return e == Electrode::Positive ? i0_p_ref : i0_n_ref; }
  double poisson(Electrode e) const { return e == Electrode::Positive ? nu_p : nu_n; }
  double young(Electrode e) const { return e == Electrode::Positive ? E_p : E_n; }
  double molar_volume(Electrode e) const { return e == Electrode::Positive ? V_p : V_n; }
};

namespace detail {

struct FieldInfo {
  std::string_view name;
  double ParameterSet::*ptr;
};

inline constexpr std::array kParameterFields = {
    FieldInfo{"theta_p_max", &ParameterSet::theta_p_max},
    FieldInfo{"theta_p_min", &ParameterSet::theta_p_min},
    FieldInfo{"theta_n_max", &ParameterSet::theta_n_max},
    FieldInfo{"theta_n_min", &ParameterSet::theta_n_min},
    FieldInfo{"R_p", &ParameterSet::R_p},
    FieldInfo{"R_n", &ParameterSet::R_n},
    FieldInfo{"sigma_p", &ParameterSet::sigma_p},
    FieldInfo{"sigma_n", &ParameterSet::sigma_n},
    FieldInfo{"eps_p", &ParameterSet::eps_p},
    FieldInfo{"eps_sep", &ParameterSet::eps_sep},
    FieldInfo{"eps_n", &ParameterSet::eps_n},
    FieldInfo{"eps_f_p", &ParameterSet::eps_f_p},
    FieldInfo{"eps_f_n", &ParameterSet::eps_f_n},
    FieldInfo{"a_p", &ParameterSet::a_p},
    FieldInfo{"a_n", &ParameterSet::a_n},
    FieldInfo{"D_e", &ParameterSet::D_e},
    FieldInfo{"D_p", &ParameterSet::D_p},
    FieldInfo{"D_n", &ParameterSet::D_n},
    FieldInfo{"c_e_init", &ParameterSet::c_e_init},
    FieldInfo{"i0_p_ref", &ParameterSet::i0_p_ref},
    FieldInfo{"i0_n_ref", &ParameterSet::i0_n_ref},
    FieldInfo{"R_SEI", &ParameterSet::R_SEI},
    FieldInfo{"nu_p", &ParameterSet::nu_p},
    FieldInfo{"nu_n", &ParameterSet::nu_n},
    FieldInfo{"E_p", &ParameterSet::E_p},
    FieldInfo{"E_n", &ParameterSet::E_n},
    FieldInfo{"V_p", &ParameterSet::V_p},
    FieldInfo{"V_n", &ParameterSet::V_n},
    FieldInfo{"V_Li", &ParameterSet::V_Li},
    FieldInfo{"L_p", &ParameterSet::L_p},
    FieldInfo{"L_sep", &ParameterSet::L_sep},
    FieldInfo{"L_n", &ParameterSet::L_n},
    FieldInfo{"A_cell", &ParameterSet::A_cell},
    FieldInfo{"c_p_max", &ParameterSet::c_p_max},
    FieldInfo{"c_n_max", &ParameterSet::c_n_max},
    FieldInfo{"t_plus", &ParameterSet::t_plus},
    FieldInfo{"bruggeman", &ParameterSet::bruggeman},
    FieldInfo{"T_amb", &ParameterSet::T_amb},
    FieldInfo{"thermal_mass", &ParameterSet::thermal_mass},
    FieldInfo{"heat_transfer", &ParameterSet::heat_transfer},
    FieldInfo{"Q_rated", &ParameterSet::Q_rated},
    FieldInfo{"V_nominal", &ParameterSet::V_nominal},
};

struct DegradationFieldInfo {
  std::string_view name;
  double DegradationParams::*ptr;
};

inline constexpr std::array kDegradationFields = {
    DegradationFieldInfo{"k_sei", &DegradationParams::k_sei},
    DegradationFieldInfo{"Ea_sei", &DegradationParams::Ea_sei},
    DegradationFieldInfo{"alpha_sei", &DegradationParams::alpha_sei},
    DegradationFieldInfo{"U_sei", &DegradationParams::U_sei},
    DegradationFieldInfo{"L_sei_init", &DegradationParams::L_sei_init},
    DegradationFieldInfo{"L_diff", &DegradationParams::L_diff},
    DegradationFieldInfo{"rho_sei", &DegradationParams::rho_sei},
    DegradationFieldInfo{"M_sei", &DegradationParams::M_sei},
    DegradationFieldInfo{"kappa_sei", &DegradationParams::kappa_sei},
    DegradationFieldInfo{"T_ref", &DegradationParams::T_ref},
    DegradationFieldInfo{"i0_plating", &DegradationParams::i0_plating},
    DegradationFieldInfo{"alpha_plating", &DegradationParams::alpha_plating},
    DegradationFieldInfo{"k_cr", &DegradationParams::k_cr},
    DegradationFieldInfo{"m_cr", &DegradationParams::m_cr},
    DegradationFieldInfo{"crack_area_per_length", &DegradationParams::crack_area_per_length},
    DegradationFieldInfo{"l_crack_init", &DegradationParams::l_crack_init},
    DegradationFieldInfo{"sigma_crit", &DegradationParams::sigma_crit},
    DegradationFieldInfo{"beta_lam", &DegradationParams::beta_lam},
    DegradationFieldInfo{"m_lam", &DegradationParams::m_lam},
};

}  // namespace detail

/// Names of all real-valued parameters, in serialization order.
inline std::vector<std::string> parameter_names() {
  std::vector<std::string> out;
  for (const auto& f : detail::kParameterFields) out.emplace_back(f.name);
  return out;
}

inline double* find_parameter(ParameterSet& p, std::string_view name) {
  for (const auto& f : detail::kParameterFields)
    if (f.name == name) return &(p.*f.ptr);
  return nullptr;
}

inline double get_parameter(const ParameterSet& p, std::string_view name) {
  for (const auto& f : detail::kParameterFields)
    if (f.name == name) return p.*f.ptr;
  throw InputError("unknown parameter '" + std::string(name) + "'", "unknown_parameter");
}

inline void set_parameter(ParameterSet& p, std::string_view name, double value) {
  double* slot = find_parameter(p, name);
  if (!slot) throw InputError("unknown parameter '" + std::string(name) + "'", "unknown_parameter");
  *slot = value;
}

/// Throws InputError listing every violated invariant.
inline void validate(const ParameterSet& p) {
  std::string problems;
  auto fail = [&](const std::string& s) { problems += (problems.empty() ? "" : "; ") + s; };
  auto window = [&](double lo, double hi, const char* which) {
    if (!(0.0 <= lo && lo < hi && hi <= 1.0))
      fail(std::string("stoichiometry window of ") + which + " must satisfy 0 <= min < max <= 1");
  };
  window(p.theta_p_min, p.theta_p_max, "pos");
  window(p.theta_n_min, p.theta_n_max, "neg");
  for (auto [v, name] : {std::pair{p.eps_p, "eps_p"}, {p.eps_sep, "eps_sep"}, {p.eps_n, "eps_n"}})
    if (!(v > 0.0 && v < 1.0)) fail(std::string(name) + " must lie in (0, 1)");
  for (auto [v, name] : {std::pair{p.eps_f_p, "eps_f_p"}, {p.eps_f_n, "eps_f_n"}})
    if (!(v >= 0.0 && v < 1.0)) fail(std::string(name) + " must lie in [0, 1)");
  if (!(p.eps_am_p() > 0.0)) fail("eps_p + eps_f_p leaves no active material");
  if (!(p.eps_am_n() > 0.0)) fail("eps_n + eps_f_n leaves no active material");
  for (const auto& f : detail::kParameterFields) {
    const double v = p.*f.ptr;
    if (!std::isfinite(v)) fail(std::string(f.name) + " is not finite");
  }
  const std::array positive = {"R_p", "R_n", "sigma_p", "sigma_n", "a_p", "a_n", "D_e", "D_p",
                               "D_n", "c_e_init", "i0_p_ref", "i0_n_ref", "E_p", "E_n", "V_p",
                               "V_n", "V_Li", "L_p", "L_sep", "L_n", "A_cell", "c_p_max",
                               "c_n_max", "bruggeman", "T_amb", "thermal_mass", "Q_rated",
                               "V_nominal"};
  for (const char* name : positive)
    if (!(get_parameter(p, name) > 0.0)) fail(std::string(name) + " must be positive");
  if (!(p.R_SEI >= 0.0)) fail("R_SEI must be non-negative");
  if (!(p.heat_transfer >= 0.0)) fail("heat_transfer must be non-negative");
  if (!(p.t_plus > 0.0 && p.t_plus < 1.0)) fail("t_plus must lie in (0, 1)");
  if (!(p.nu_p > -1.0 && p.nu_p < 0.5) || !(p.nu_n > -1.0 && p.nu_n < 0.5))
    fail("Poisson's ratios must lie in (-1, 0.5)");
  if (p.n_series < 1) fail("n_series must be a positive integer");
  const auto& d = p.degradation;
  if (!(d.L_sei_init > 0.0)) fail("degradation.L_sei_init must be positive");
  if (!(d.L_diff > 0.0)) fail("degradation.L_diff must be positive");
  if (!(d.sigma_crit > 0.0)) fail("degradation.sigma_crit must be positive");
  if (!(d.k_sei >= 0.0 && d.i0_plating >= 0.0 && d.k_cr >= 0.0 && d.beta_lam >= 0.0))
    fail("degradation rate constants must be non-negative");
  if (!problems.empty()) throw InputError("invalid parameter set: " + problems, "invalid_parameters");
}

inline nlohmann::json to_json(const DegradationParams& d) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : detail::kDegradationFields) j[std::string(f.name)] = d.*f.ptr;
  j["toggles"] = {{"sei_nominal", d.toggles.sei_nominal}, {"sei_crack", d.toggles.sei_crack},
                  {"plating", d.toggles.plating},         {"cracking", d.toggles.cracking},
                  {"lam", d.toggles.lam},                 {"mechanics_positive", d.toggles.mechanics_positive}};
  return j;
}

inline nlohmann::json to_json(const ParameterSet& p) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : detail::kParameterFields) j[std::string(f.name)] = p.*f.ptr;
  j["n_series"] = p.n_series;
  j["degradation"] = to_json(p.degradation);
  return j;
}

inline void update_from_json(DegradationParams& d, const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("'degradation' must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "toggles") {
      if (!value.is_object()) throw InputError("'degradation.toggles' must be a JSON object");
      for (const auto& [tk, tv] : value.items()) {
        if (!tv.is_boolean()) throw InputError("toggle '" + tk + "' must be boolean");
        const bool b = tv.get<bool>();
        if (tk == "sei_nominal") d.toggles.sei_nominal = b;
        else if (tk == "sei_crack") d.toggles.sei_crack = b;
        else if (tk == "plating") d.toggles.plating = b;
        else if (tk == "cracking") d.toggles.cracking = b;
        else if (tk == "lam") d.toggles.lam = b;
        else if (tk == "mechanics_positive") d.toggles.mechanics_positive = b;
        else throw InputError("unknown degradation toggle '" + tk + "'", "unknown_parameter");
      }
      continue;
    }
    bool found = false;
    for (const auto& f : detail::kDegradationFields) {
      if (f.name == key) {
        if (!value.is_number()) throw InputError("degradation." + key + " must be a number");
        d.*f.ptr = value.get<double>();
        found = true;
        break;
      }
    }
    if (!found) throw InputError("unknown degradation parameter '" + key + "'", "unknown_parameter");
  }
}

/// Overwrites the fields present in `j`; absent keys keep their current value.
inline void update_from_json(ParameterSet& p, const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("parameter document must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "degradation") {
      update_from_json(p.degradation, value);
    } else if (key == "n_series") {
      if (!value.is_number_integer()) throw InputError("n_series must be an integer");
      p.n_series = value.get<int>();
    } else {
      double* slot = find_parameter(p, key);
      if (!slot) throw InputError("unknown parameter '" + key + "'", "unknown_parameter");
      if (!value.is_number()) throw InputError("parameter '" + key + "' must be a number");
      *slot = value.get<double>();
    }
  }
}

inline ParameterSet parameters_from_json(const nlohmann::json& j) {
  ParameterSet p;
  update_from_json(p, j);
  validate(p);
  return p;
}

}  // namespace qbat
