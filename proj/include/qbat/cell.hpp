#pragma once

// Implicit finite-volume P2D cell with a lumped thermal balance.
//
// Unknowns per step: electrolyte concentration and potential in every
// control volume, solid potential and pore-wall flux in every electrode
// volume, temperature and applied current. Particle diffusion is linear in
// the surface flux, so each particle is condensed onto its node through a
// unit response and never enters the Newton system.

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "constants.hpp"
#include "degradation.hpp"
#include "errors.hpp"
#include "kinetics.hpp"
#include "mesh.hpp"
#include "ocp.hpp"
#include "parameters.hpp"

namespace qbat {

struct SolverOptions {
  double tol_newton = 1e-8;
  int max_newton_iter = 25;
  double dt_floor = 1e-4;
  double v_min = 2.5;
  double v_max = 4.2;
  bool entropic_heat = false;
  // dOCV/dT (V/K) against state of charge, used when entropic_heat is set.
  std::shared_ptr<const MonotoneCubic> entropic_table;
};

struct CellState {
  std::vector<double> c_s_n;  // [node * n_r + shell], mol/m^3
  std::vector<double> c_s_p;
  std::vector<double> c_e;    // per control volume
  std::vector<double> phi_e;
  std::vector<double> phi_s;  // per electrode node, negative nodes first
  std::vector<double> j;      // pore-wall flux, mol/m^2/s
  double T = 298.15;
  double t = 0.0;
  double current = 0.0;
  double voltage = 0.0;
  DegradationState degradation;

  std::vector<double>& c_s(Electrode e) { return e == Electrode::Positive ? c_s_p : c_s_n; }
  const std::vector<double>& c_s(Electrode e) const { return e == Electrode::Positive ? c_s_p : c_s_n; }
};

struct StepInfo {
  int iterations = 0;
  double residual = 0.0;
};

enum class Control { Current, Voltage };

class Cell {
public:
  explicit Cell(ParameterSet p, MeshSpec spec = {}, SolverOptions opt = {}, OcpSet ocp = default_ocp())
      : p_(std::move(p)), opt_(std::move(opt)), ocp_(std::move(ocp)) {
    validate(p_);
    mesh_ = Mesh::build(spec, p_);
    nx_ = mesh_.size();
    ne_ = mesh_.n_electrode();
    nr_ = spec.n_r;
    n_ = 2 * nx_ + 2 * ne_ + 2;
    for (Electrode e : {Electrode::Negative, Electrode::Positive}) {
      auto& d = side(e);
      d.grid = ShellGrid(nr_, p_.radius(e));
      d.D = p_.diffusivity(e);
      d.cmax = p_.c_max(e);
      d.eps_am0 = p_.eps_am(e);
      d.s = p_.surface_area(e) * p_.radius(e) / (3.0 * d.eps_am0);
      const double eps = e == Electrode::Positive ? p_.eps_p : p_.eps_n;
      const double sig = e == Electrode::Positive ? p_.sigma_p : p_.sigma_n;
      d.sigma_eff = sig * (1.0 - eps);
      d.L = p_.thickness(e);
      d.stress_k = p_.molar_volume(e) * p_.young(e) / (3.0 * (1.0 - p_.poisson(e)));
    }
    eps_.resize(nx_);
    brug_.resize(nx_);
    for (int i = 0; i < nx_; ++i) {
      eps_[i] = mesh_.region[i] == Region::Negative ? p_.eps_n
                : mesh_.region[i] == Region::Separator ? p_.eps_sep
                                                       : p_.eps_p;
      brug_[i] = std::pow(eps_[i], p_.bruggeman);
    }
    dface_.assign(nx_, 0.0);
    hface_.assign(nx_, 0.0);
    for (int f = 1; f < nx_; ++f) {
      const double dl = p_.D_e * brug_[f - 1], dr = p_.D_e * brug_[f];
      hface_[f] = 0.5 * (mesh_.dx[f - 1] + mesh_.dx[f]);
      dface_[f] = hface_[f] / (0.5 * mesh_.dx[f - 1] / dl + 0.5 * mesh_.dx[f] / dr);
    }
    const double i1c = std::max(p_.one_c_current(), 1e-6);
    i_ref_ = i1c / p_.A_cell;
    q_ref_ = i_ref_ / constants::kFaraday;
    for (Electrode e : {Electrode::Negative, Electrode::Positive})
      side(e).j_ref = i_ref_ / (constants::kFaraday * p_.surface_area(e) * side(e).L);
    initialize(1.0);
  }

  const ParameterSet& params() const { return p_; }
  const Mesh& mesh() const { return mesh_; }
  const SolverOptions& options() const { return opt_; }
  const OcpSet& ocp_set() const { return ocp_; }
  const CellState& state() const { return s_; }
  void set_state(const CellState& s) { s_ = s; }
  DegradationState& degradation() { return s_.degradation; }
  void set_toggles(const DegradationToggles& t) { p_.degradation.toggles = t; }

  /// Uniform equilibrium at the given state of charge with fresh degradation.
  void initialize(double soc, double T = -1.0) {
    if (!(soc >= 0.0 && soc <= 1.0)) throw InputError("initial state of charge must lie in [0, 1]");
    s_ = CellState{};
    s_.degradation = DegradationState::fresh(p_);
    const double th_n = p_.theta_n_min + soc * (p_.theta_n_max - p_.theta_n_min);
    const double th_p = p_.theta_p_max - soc * (p_.theta_p_max - p_.theta_p_min);
    equilibrate(th_n * p_.c_n_max, th_p * p_.c_p_max, T > 0.0 ? T : p_.T_amb);
  }

  /// Fully charged equilibrium consistent with an aged degradation state:
  /// positive electrode at its lower stoichiometry limit, negative electrode
  /// holding whatever cyclable lithium remains.
  void reset_full(DegradationState d) {
    const double area = p_.A_cell;
    const double n_pos_fresh = p_.eps_am_p() * area * p_.L_p * p_.c_p_max * p_.theta_p_min;
    const double n_neg_fresh = p_.eps_am_n() * area * p_.L_n * p_.c_n_max * p_.theta_n_max;
    const double n_pos = d.eps_am_p * area * p_.L_p * p_.c_p_max * p_.theta_p_min;
    const double n_neg = n_neg_fresh + (n_pos_fresh - n_pos) - d.li_lost_total() - d.li_trapped;
    const double th_n = n_neg / (d.eps_am_n * area * p_.L_n * p_.c_n_max);
    s_ = CellState{};
    s_.degradation = d;
    equilibrate(std::clamp(th_n, 1e-6, 1.0 - 1e-6) * p_.c_n_max, p_.theta_p_min * p_.c_p_max, p_.T_amb);
  }

  double voltage() const { return s_.voltage; }
  double temperature() const { return s_.T; }
  double time() const { return s_.t; }

  /// Mean stoichiometry of an electrode.
  double mean_stoichiometry(Electrode e) const {
    const auto& d = side(e);
    const auto& c = s_.c_s(e);
    const int n = e == Electrode::Positive ? mesh_.spec.n_pos : mesh_.spec.n_neg;
    double acc = 0.0;
    for (int l = 0; l < n; ++l) acc += d.grid.mean(&c[l * nr_]);
    return acc / (n * d.cmax);
  }

  double ocv() const {
    return ocp_(Electrode::Positive, mean_stoichiometry(Electrode::Positive)) -
           ocp_(Electrode::Negative, mean_stoichiometry(Electrode::Negative));
  }

  /// Lithium held in active particles, mol.
  double solid_lithium() const {
    double total = 0.0;
    for (Electrode e : {Electrode::Negative, Electrode::Positive}) {
      const auto& d = side(e);
      const auto& c = s_.c_s(e);
      const int n = e == Electrode::Positive ? mesh_.spec.n_pos : mesh_.spec.n_neg;
      const int k0 = e == Electrode::Positive ? mesh_.spec.n_neg : 0;
      for (int l = 0; l < n; ++l)
        total += s_.degradation.eps_am(e) * p_.A_cell * mesh_.dx[mesh_.node_of_electrode(k0 + l)] *
                 d.grid.mean(&c[l * nr_]);
    }
    return total;
  }

  double electrolyte_lithium() const {
    double total = 0.0;
    for (int i = 0; i < nx_; ++i) total += eps_[i] * mesh_.dx[i] * p_.A_cell * s_.c_e[i];
    return total;
  }

  double total_lithium() const { return solid_lithium() + electrolyte_lithium(); }

  /// Cyclable lithium of the fresh, fully charged cell, mol.
  double initial_inventory() const {
    return p_.eps_am_n() * p_.A_cell * p_.L_n * p_.c_n_max * p_.theta_n_max +
           p_.eps_am_p() * p_.A_cell * p_.L_p * p_.c_p_max * p_.theta_p_min;
  }

  /// Throws DomainError when the state breaks a physical invariant.
  void check_invariants() const {
    for (Electrode e : {Electrode::Negative, Electrode::Positive})
      for (double c : s_.c_s(e))
        if (!(c >= 0.0 && c <= side(e).cmax))
          throw DomainError(std::string("solid concentration out of range in ") + std::string(to_string(e)));
    for (double c : s_.c_e)
      if (!(c > 0.0)) throw DomainError("electrolyte concentration must stay positive");
    if (!(s_.T > 0.0)) throw DomainError("temperature must stay positive");
  }

  /// Interfacial current integral a*F*j over an electrode, A/m^2.
  double interfacial_current(Electrode e) const {
    double acc = 0.0;
    const int k0 = e == Electrode::Positive ? mesh_.spec.n_neg : 0;
    const int n = e == Electrode::Positive ? mesh_.spec.n_pos : mesh_.spec.n_neg;
    for (int l = 0; l < n; ++l)
      acc += a_eff(e) * constants::kFaraday * s_.j[k0 + l] * mesh_.dx[mesh_.node_of_electrode(k0 + l)];
    return acc;
  }

  /// Surface stress per electrode node from the current profiles, Pa.
  double node_stress(int k) const {
    const Electrode e = mesh_.electrode_of(k);
    const int l = local(k);
    const auto& d = side(e);
    const double* c = &s_.c_s(e)[l * nr_];
    return d.stress_k * (d.grid.mean(c) - surface_concentration(k));
  }

  double surface_concentration(int k) const {
    const Electrode e = mesh_.electrode_of(k);
    const auto& d = side(e);
    return s_.c_s(e)[local(k) * nr_ + nr_ - 1] - d.s * s_.j[k] * 0.5 * d.grid.dr / d.D;
  }

  /// Most tensile surface stress over an electrode, Pa.
  double peak_stress(Electrode e) const {
    const int k0 = e == Electrode::Positive ? mesh_.spec.n_neg : 0;
    const int n = e == Electrode::Positive ? mesh_.spec.n_pos : mesh_.spec.n_neg;
    double best = -INFINITY;
    for (int l = 0; l < n; ++l) best = std::max(best, node_stress(k0 + l));
    return best;
  }

  /// Packed unknown vector of the current state (diagnostics and tests).
  Eigen::VectorXd unknowns() const { return pack(); }

  /// Scaled residual of one implicit step at `x`, optionally with its
  /// Jacobian. Returns false when `x` is physically inadmissible.
  bool residual(Control mode, double setpoint, double dt, const Eigen::VectorXd& x, Eigen::VectorXd& R,
                Eigen::MatrixXd* J = nullptr) {
    StepData sd;
    sd.mode = mode;
    sd.setpoint = setpoint;
    sd.dt = dt;
    prepare(sd);
    return evaluate(sd, x, R, J);
  }

  /// One implicit step under an applied current (A, discharge positive).
  StepInfo step_current(double I, double dt) { return advance(Control::Current, I, dt); }

  /// One implicit step holding the terminal voltage.
  StepInfo step_voltage(double V, double dt) { return advance(Control::Voltage, V, dt); }

private:
  struct Side {
    ShellGrid grid;
    double D = 0.0, cmax = 0.0, eps_am0 = 0.0, s = 0.0, sigma_eff = 0.0, L = 0.0, j_ref = 0.0;
    double stress_k = 0.0;
    // Per-step particle condensation.
    std::vector<double> unit;  // shell response to unit surface flux
    double g = 0.0;            // d(c_surf)/d(particle flux)
  };

  Side& side(Electrode e) { return e == Electrode::Positive ? pos_ : neg_; }
  const Side& side(Electrode e) const { return e == Electrode::Positive ? pos_ : neg_; }
  int local(int k) const { return k < mesh_.spec.n_neg ? k : k - mesh_.spec.n_neg; }
  double a_eff(Electrode e) const {
    return p_.surface_area(e) * s_.degradation.eps_am(e) / side(e).eps_am0;
  }
  double film() const { return film_resistance(p_, s_.degradation); }

  void equilibrate(double cn, double cp, double T) {
    s_.c_s_n.assign(mesh_.spec.n_neg * nr_, cn);
    s_.c_s_p.assign(mesh_.spec.n_pos * nr_, cp);
    s_.c_e.assign(nx_, p_.c_e_init);
    const double un = ocp_(Electrode::Negative, cn / p_.c_n_max);
    const double up = ocp_(Electrode::Positive, cp / p_.c_p_max);
    s_.phi_e.assign(nx_, -un);
    s_.phi_s.assign(ne_, 0.0);
    for (int k = mesh_.spec.n_neg; k < ne_; ++k) s_.phi_s[k] = up - un;
    s_.j.assign(ne_, 0.0);
    s_.T = T;
    s_.current = 0.0;
    s_.voltage = up - un;
  }

  // Variable offsets.
  int ice(int i) const { return i; }
  int ipe(int i) const { return nx_ + i; }
  int ips(int k) const { return 2 * nx_ + k; }
  int ij(int k) const { return 2 * nx_ + ne_ + k; }
  int iT() const { return 2 * nx_ + 2 * ne_; }
  int iI() const { return iT() + 1; }

  // Thomas solve of the implicit shell system (Vol/dt + diffusion) x = rhs.
  static void shell_solve(const ShellGrid& g, double D, double dt, std::vector<double>& x) {
    const int n = g.n;
    std::vector<double> c(n), d(n);
    auto upper = [&](int m) { return m + 1 < n ? -D * g.face[m + 1] / g.dr : 0.0; };
    auto lower = [&](int m) { return m > 0 ? -D * g.face[m] / g.dr : 0.0; };
    auto diag = [&](int m) {
      double v = g.volume[m] / dt;
      if (m + 1 < n) v += D * g.face[m + 1] / g.dr;
      if (m > 0) v += D * g.face[m] / g.dr;
      return v;
    };
    double b = diag(0);
    c[0] = upper(0) / b;
    d[0] = x[0] / b;
    for (int m = 1; m < n; ++m) {
      b = diag(m) - lower(m) * c[m - 1];
      c[m] = upper(m) / b;
      d[m] = (x[m] - lower(m) * d[m - 1]) / b;
    }
    x[n - 1] = d[n - 1];
    for (int m = n - 2; m >= 0; --m) x[m] = d[m] - c[m] * x[m + 1];
  }

  struct StepData {
    Control mode = Control::Current;
    double setpoint = 0.0;
    double dt = 0.0;
    std::vector<double> base;   // per electrode node, full shell profile
    std::vector<double> base_surf;
    std::vector<double> cbar_old;
  };

  void prepare(StepData& sd) {
    const double dt = sd.dt;
    for (Electrode e : {Electrode::Negative, Electrode::Positive}) {
      auto& d = side(e);
      d.unit.assign(nr_, 0.0);
      d.unit[nr_ - 1] = -d.grid.face[nr_];
      shell_solve(d.grid, d.D, dt, d.unit);
      d.g = d.unit[nr_ - 1] - 0.5 * d.grid.dr / d.D;
    }
    sd.base.assign(ne_ * nr_, 0.0);
    sd.base_surf.assign(ne_, 0.0);
    sd.cbar_old.assign(ne_, 0.0);
    std::vector<double> x(nr_);
    for (int k = 0; k < ne_; ++k) {
      const Electrode e = mesh_.electrode_of(k);
      const auto& d = side(e);
      const double* c = &s_.c_s(e)[local(k) * nr_];
      for (int m = 0; m < nr_; ++m) x[m] = d.grid.volume[m] * c[m] / dt;
      shell_solve(d.grid, d.D, dt, x);
      std::copy(x.begin(), x.end(), sd.base.begin() + k * nr_);
      sd.base_surf[k] = x[nr_ - 1];
      sd.cbar_old[k] = d.grid.mean(c);
    }
  }

  // Residual (scaled) and optionally the dense Jacobian. Returns false when
  // x lies outside the physically admissible set.
  bool evaluate(const StepData& sd, const Eigen::VectorXd& x, Eigen::VectorXd& R, Eigen::MatrixXd* J) const {
    constexpr double F = constants::kFaraday;
    const double dt = sd.dt;
    const double T = x[iT()];
    const double I = x[iI()];
    if (!(T > 0.0) || !std::isfinite(I)) return false;
    for (int i = 0; i < nx_; ++i)
      if (!(x[ice(i)] > 0.0)) return false;
    R.setZero(n_);
    if (J) J->setZero(n_, n_);
    auto add = [&](int r, int c, double v) {
      if (J) (*J)(r, c) += v;
    };
    const double A = p_.A_cell;
    const double Rf = film();
    const Side& sn = neg_;
    const Side& sp = pos_;
    const int nn = mesh_.spec.n_neg;
    const double dx0 = mesh_.dx[0], dxl = mesh_.dx[nx_ - 1];
    const double rcn = 0.5 * dx0 / (sn.sigma_eff * A);   // collector half-cell resistances
    const double rcp = 0.5 * dxl / (sp.sigma_eff * A);
    const double V = x[ips(ne_ - 1)] - I * rcp - (x[ips(0)] + I * rcn);
    const double dV_dI = -rcp - rcn;

    // Electrolyte mass.
    for (int i = 0; i < nx_; ++i) {
      const int r = ice(i);
      R[r] += eps_[i] * mesh_.dx[i] * (x[ice(i)] - s_.c_e[i]) / dt / q_ref_;
      add(r, ice(i), eps_[i] * mesh_.dx[i] / dt / q_ref_);
    }
    for (int f = 1; f < nx_; ++f) {
      const int L = f - 1, Rr = f;
      const double k = dface_[f] / hface_[f];
      const double N = -k * (x[ice(Rr)] - x[ice(L)]);
      R[ice(L)] += N / q_ref_;
      R[ice(Rr)] -= N / q_ref_;
      add(ice(L), ice(Rr), -k / q_ref_);
      add(ice(L), ice(L), k / q_ref_);
      add(ice(Rr), ice(Rr), k / q_ref_);
      add(ice(Rr), ice(L), -k / q_ref_);
    }

    // Electrolyte charge: flux terms.
    const double beta = 2.0 * constants::kGas * (1.0 - p_.t_plus) / F;
    std::vector<double> kap(nx_), dkap(nx_);
    for (int i = 0; i < nx_; ++i) {
      double dk;
      kap[i] = electrolyte_conductivity(x[ice(i)], &dk) * brug_[i];
      dkap[i] = dk * brug_[i];
    }
    for (int f = 1; f < nx_; ++f) {
      const int L = f - 1, Rr = f;
      const double h = hface_[f];
      const double wl = 0.5 * mesh_.dx[L], wr = 0.5 * mesh_.dx[Rr];
      const double kf = h / (wl / kap[L] + wr / kap[Rr]);
      const double dkf_dkl = kf * kf * wl / (h * kap[L] * kap[L]);
      const double dkf_dkr = kf * kf * wr / (h * kap[Rr] * kap[Rr]);
      const double lnr = std::log(x[ice(Rr)]), lnl = std::log(x[ice(L)]);
      const double G = (-(x[ipe(Rr)] - x[ipe(L)]) + beta * T * (lnr - lnl)) / h;
      const double ie = kf * G;
      const double d_pr = -kf / h, d_pl = kf / h;
      const double d_cr = dkf_dkr * dkap[Rr] * G + kf * beta * T / (h * x[ice(Rr)]);
      const double d_cl = dkf_dkl * dkap[L] * G - kf * beta * T / (h * x[ice(L)]);
      const double d_T = kf * beta * (lnr - lnl) / h;
      // +ie on the left volume's row, -ie on the right volume's row.
      for (int side_sign : {+1, -1}) {
        const int cv = side_sign > 0 ? L : Rr;
        if (cv == 0) continue;  // reference row
        const int r = ipe(cv);
        const double s = side_sign / i_ref_;
        R[r] += s * ie;
        add(r, ipe(Rr), s * d_pr);
        add(r, ipe(L), s * d_pl);
        add(r, ice(Rr), s * d_cr);
        add(r, ice(L), s * d_cl);
        add(r, iT(), s * d_T);
      }
    }
    // Reference: negative collector potential is zero.
    R[ipe(0)] = x[ips(0)] + I * rcn;
    add(ipe(0), ips(0), 1.0);
    add(ipe(0), iI(), rcn);

    // Electrode nodes: reaction source terms, solid charge, kinetics.
    double dth_mean_n = 0.0, dth_mean_p = 0.0;  // mean stoichiometry per electrode
    for (int k = 0; k < ne_; ++k) {
      const Electrode e = mesh_.electrode_of(k);
      const Side& d = side(e);
      const int i = mesh_.node_of_electrode(k);
      const double dx = mesh_.dx[i];
      const double ae = a_eff(e);
      const double jv = x[ij(k)];

      // Electrolyte mass and charge sources.
      R[ice(i)] -= (1.0 - p_.t_plus) * ae * jv * dx / q_ref_;
      add(ice(i), ij(k), -(1.0 - p_.t_plus) * ae * dx / q_ref_);
      if (i != 0) {
        R[ipe(i)] -= ae * F * jv * dx / i_ref_;
        add(ipe(i), ij(k), -ae * F * dx / i_ref_);
      }

      // Solid charge.
      const bool is_neg = e == Electrode::Negative;
      const int l = local(k);
      const int n_el = is_neg ? nn : mesh_.spec.n_pos;
      const double g = d.sigma_eff / dx;
      const int r = ips(k);
      R[r] += ae * F * jv * dx / i_ref_;
      add(r, ij(k), ae * F * dx / i_ref_);
      // right face
      if (l + 1 < n_el) {
        R[r] += -g * (x[ips(k + 1)] - x[ips(k)]) / i_ref_;
        add(r, ips(k + 1), -g / i_ref_);
        add(r, ips(k), g / i_ref_);
      } else if (!is_neg) {
        R[r] += I / A / i_ref_;
        add(r, iI(), 1.0 / A / i_ref_);
      }
      // left face
      if (l > 0) {
        R[r] -= -g * (x[ips(k)] - x[ips(k - 1)]) / i_ref_;
        add(r, ips(k), g / i_ref_);
        add(r, ips(k - 1), -g / i_ref_);
      } else if (is_neg) {
        R[r] -= I / A / i_ref_;
        add(r, iI(), -1.0 / A / i_ref_);
      }

      // Kinetics.
      const double dth_dj = d.g * d.s / d.cmax;
      const double th = (sd.base_surf[k] + d.g * d.s * jv) / d.cmax;
      if (!(th > 0.0 && th < 1.0)) return false;
      double U, dU;
      ocp_.eval(e, th, U, dU);
      const double rf = is_neg ? Rf : 0.0;
      const double eta = x[ips(k)] - x[ipe(i)] - U - F * jv * rf;
      const double deta_dj = -dU * dth_dj - F * rf;
      const double ce = x[ice(i)];
      const double fT = F / (constants::kGas * T);
      const double i0 = p_.i0_ref(e) * std::sqrt(ce / p_.c_e_init) * std::sqrt(th * (1.0 - th));
      const double ea = std::exp(0.5 * fT * eta), ec = std::exp(-0.5 * fT * eta);
      if (!std::isfinite(ea) || !std::isfinite(ec)) return false;
      const double jbv = i0 / F * (ea - ec);
      const double d_eta = i0 / F * 0.5 * fT * (ea + ec);
      const double d_th = jbv * (0.5 / th - 0.5 / (1.0 - th));
      const double d_ce = jbv * 0.5 / ce;
      const double d_T = -(i0 / F) * 0.5 * fT * eta / T * (ea + ec);
      const int rk = ij(k);
      R[rk] = (jv - jbv) / d.j_ref;
      add(rk, ij(k), (1.0 - d_eta * deta_dj - d_th * dth_dj) / d.j_ref);
      add(rk, ips(k), -d_eta / d.j_ref);
      add(rk, ipe(i), d_eta / d.j_ref);
      add(rk, ice(i), -d_ce / d.j_ref);
      add(rk, iT(), -d_T / d.j_ref);

      const double cbar = sd.cbar_old[k] - 3.0 * dt * d.s * jv / d.grid.radius;
      (is_neg ? dth_mean_n : dth_mean_p) += cbar / d.cmax;
    }
    const double thn = dth_mean_n / nn, thp = dth_mean_p / mesh_.spec.n_pos;
    if (!(thn >= 0.0 && thn <= 1.0 && thp >= 0.0 && thp <= 1.0)) return false;

    // Thermal balance.
    {
      double Un, dUn, Up, dUp;
      ocp_.eval(Electrode::Negative, thn, Un, dUn);
      ocp_.eval(Electrode::Positive, thp, Up, dUp);
      const double Uocv = Up - Un;
      double Q = I * (Uocv - V);
      double dQ_dI = (Uocv - V) - I * dV_dI;
      double dQ_dT = 0.0;
      if (opt_.entropic_heat && opt_.entropic_table) {
        const double soc = (thn - p_.theta_n_min) / (p_.theta_n_max - p_.theta_n_min);
        const double dUdT = (*opt_.entropic_table)(soc);
        Q -= I * T * dUdT;
        dQ_dI -= T * dUdT;
        dQ_dT -= I * dUdT;
      }
      const double mc = p_.thermal_mass;
      const double sc = dt / mc;
      const int r = iT();
      R[r] = (mc * (T - s_.T) / dt - Q + p_.heat_transfer * (T - p_.T_amb)) * sc;
      add(r, iT(), (mc / dt + p_.heat_transfer - dQ_dT) * sc);
      add(r, iI(), -dQ_dI * sc);
      add(r, ips(ne_ - 1), I * sc);  // dQ/dV = -I
      add(r, ips(0), -I * sc);
      for (int k = 0; k < ne_; ++k) {
        const Electrode e = mesh_.electrode_of(k);
        const Side& d = side(e);
        const int n_el = e == Electrode::Negative ? nn : mesh_.spec.n_pos;
        const double dth = -3.0 * dt * d.s / (d.grid.radius * d.cmax * n_el);
        const double dUocv = e == Electrode::Negative ? -dUn * dth : dUp * dth;
        add(r, ij(k), -I * dUocv * sc);
      }
    }

    // Control.
    if (sd.mode == Control::Current) {
      R[iI()] = (I - sd.setpoint) / (i_ref_ * A);
      add(iI(), iI(), 1.0 / (i_ref_ * A));
    } else {
      R[iI()] = V - sd.setpoint;
      add(iI(), ips(ne_ - 1), 1.0);
      add(iI(), ips(0), -1.0);
      add(iI(), iI(), dV_dI);
    }
    for (int r = 0; r < n_; ++r)
      if (!std::isfinite(R[r])) return false;
    return true;
  }

  Eigen::VectorXd pack() const {
    Eigen::VectorXd x(n_);
    for (int i = 0; i < nx_; ++i) {
      x[ice(i)] = s_.c_e[i];
      x[ipe(i)] = s_.phi_e[i];
    }
    for (int k = 0; k < ne_; ++k) {
      x[ips(k)] = s_.phi_s[k];
      x[ij(k)] = s_.j[k];
    }
    x[iT()] = s_.T;
    x[iI()] = s_.current;
    return x;
  }

  StepInfo newton(const StepData& sd, Eigen::VectorXd& x) const {
    Eigen::VectorXd R(n_), Rt(n_), dx(n_), xt(n_);
    Eigen::MatrixXd J(n_, n_);
    if (!evaluate(sd, x, R, nullptr)) throw StepFailure(INFINITY, "initial guess outside admissible set");
    double norm = R.lpNorm<Eigen::Infinity>();
    int it = 0;
    while (norm >= opt_.tol_newton) {
      if (it == opt_.max_newton_iter)
        throw StepFailure(norm, "Newton did not converge in " + std::to_string(it) + " iterations");
      ++it;
      evaluate(sd, x, R, &J);
      dx = J.partialPivLu().solve(-R);
      if (!dx.allFinite()) throw StepFailure(norm, "singular Newton system");
      double alpha = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 12; ++ls, alpha *= 0.5) {
        xt = x + alpha * dx;
        if (!evaluate(sd, xt, Rt, nullptr)) continue;
        const double nt = Rt.lpNorm<Eigen::Infinity>();
        if (nt < norm || nt < opt_.tol_newton) {
          x = xt;
          R = Rt;
          norm = nt;
          accepted = true;
          break;
        }
      }
      if (!accepted) throw StepFailure(norm, "line search failed");
    }
    return {it, norm};
  }

  StepInfo advance(Control mode, double setpoint, double dt) {
    if (!(dt > 0.0)) throw InputError("time step must be positive");
    StepData sd;
    sd.mode = mode;
    sd.setpoint = setpoint;
    sd.dt = dt;
    prepare(sd);

    Eigen::VectorXd x = pack();
    StepInfo info;
    bool done = false;
    if (mode == Control::Current && setpoint != s_.current) {
      // Spread the current change uniformly over each electrode as a predictor.
      Eigen::VectorXd guess = x;
      const double dI = setpoint - s_.current;
      for (int k = 0; k < ne_; ++k) {
        const Electrode e = mesh_.electrode_of(k);
        const double share = dI / (constants::kFaraday * p_.A_cell * a_eff(e) * side(e).L);
        guess[ij(k)] += e == Electrode::Negative ? share : -share;
      }
      guess[iI()] = setpoint;
      try {
        info = newton(sd, guess);
        x = guess;
        done = true;
      } catch (const StepFailure&) {
      }
    }
    if (!done) info = newton(sd, x);

    // Accept: reconstruct particles, commit, age.
    CellState next = s_;
    for (int k = 0; k < ne_; ++k) {
      const Electrode e = mesh_.electrode_of(k);
      const Side& d = side(e);
      const double jp = d.s * x[ij(k)];
      double* c = &next.c_s(e)[local(k) * nr_];
      for (int m = 0; m < nr_; ++m) {
        c[m] = sd.base[k * nr_ + m] + jp * d.unit[m];
        if (!(c[m] >= 0.0 && c[m] <= d.cmax)) throw StepFailure(info.residual, "solid concentration left [0, c_max]");
      }
    }
    for (int i = 0; i < nx_; ++i) {
      next.c_e[i] = x[ice(i)];
      next.phi_e[i] = x[ipe(i)];
    }
    for (int k = 0; k < ne_; ++k) {
      next.phi_s[k] = x[ips(k)];
      next.j[k] = x[ij(k)];
    }
    next.T = x[iT()];
    next.current = x[iI()];
    next.t = s_.t + dt;
    const double A = p_.A_cell;
    next.voltage = next.phi_s[ne_ - 1] - next.current * 0.5 * mesh_.dx[nx_ - 1] / (pos_.sigma_eff * A) -
                   (next.phi_s[0] + next.current * 0.5 * mesh_.dx[0] / (neg_.sigma_eff * A));
    s_ = std::move(next);
    if (p_.degradation.toggles.any()) age(dt);
    return info;
  }

  // Weakly coupled degradation update from end-of-step fields.
  void age(double dt) {
    constexpr double F = constants::kFaraday;
    const auto& tg = p_.degradation.toggles;
    auto& dg = s_.degradation;
    const int nn = mesh_.spec.n_neg;
    const double Rf = film();
    const double T = s_.T;
    const double A = p_.A_cell;

    double dL_nom = 0.0, dL_crack = 0.0, dq = 0.0;
    double li_nom = 0.0, li_crack = 0.0, li_pl = 0.0;
    std::vector<double> removed(nn, 0.0);
    for (int k = 0; k < nn; ++k) {
      const int i = mesh_.node_of_electrode(k);
      const double dx = mesh_.dx[i];
      const double w = dx / p_.L_n;
      const double interface = s_.phi_s[k] - s_.phi_e[i] - F * s_.j[k] * Rf;
      const double eta_sei = interface - p_.degradation.U_sei;
      if (tg.sei_nominal) {
        const auto inc = sei_growth_step(dg, p_, T, eta_sei, SeiSurface::Nominal, dt);
        dL_nom += w * inc.dL;
        li_nom += w * inc.dli;
        removed[k] += w * inc.dli;
      }
      if (tg.sei_crack && dg.a_crack > 0.0) {
        const auto inc = sei_growth_step(dg, p_, T, eta_sei, SeiSurface::Crack, dt);
        dL_crack += w * inc.dL;
        li_crack += w * inc.dli;
        removed[k] += w * inc.dli;
      }
      if (tg.plating) {
        const double q = plating_step(dg, p_, interface, T, dt);
        dq += w * q;
        li_pl += q * A * dx;
        removed[k] += q * A * dx;
      }
    }
    dg.L_sei_nom += dL_nom;
    dg.L_sei_crack += dL_crack;
    dg.q_plated += dq;
    dg.li_lost_sei_nom += li_nom;
    dg.li_lost_sei_crack += li_crack;
    dg.li_lost_plating += li_pl;
    for (int k = 0; k < nn; ++k) {
      if (removed[k] <= 0.0) continue;
      const double dc = removed[k] / (dg.eps_am_n * A * mesh_.dx[mesh_.node_of_electrode(k)]);
      for (int m = 0; m < nr_; ++m) {
        double& c = s_.c_s_n[k * nr_ + m];
        c = std::max(0.0, c - dc);
      }
    }

    if (!(tg.cracking || tg.lam)) return;
    for (Electrode e : {Electrode::Negative, Electrode::Positive}) {
      if (e == Electrode::Positive && !tg.mechanics_positive) continue;
      const double sigma = peak_stress(e);
      auto& counter = e == Electrode::Negative ? dg.counter_n : dg.counter_p;
      const double amp = counter.feed(sigma);
      if (tg.cracking && amp > 0.0) {
        const auto inc = crack_growth_step(amp, p_);
        if (e == Electrode::Negative) {
          dg.L_sei_crack = merge_crack_sei(dg.L_sei_crack, dg.a_crack, inc.da);
          dg.a_crack += inc.da;
          dg.l_crack += inc.dl;
          ++dg.n_half_cycles;
        } else {
          dg.l_crack_p += inc.dl;
          ++dg.n_half_cycles_p;
        }
      }
      if (tg.lam) {
        double& eps = e == Electrode::Negative ? dg.eps_am_n : dg.eps_am_p;
        const double de = lam_step(eps, sigma, p_, dt);
        if (de < 0.0) {
          const double cbar = mean_stoichiometry(e) * side(e).cmax;
          dg.li_trapped += -de * A * side(e).L * cbar;
          eps = std::max(eps + de, 1e-12 * side(e).eps_am0);
        }
      }
    }
  }

  ParameterSet p_;
  SolverOptions opt_;
  OcpSet ocp_;
  Mesh mesh_;
  int nx_ = 0, ne_ = 0, nr_ = 0, n_ = 0;
  Side neg_, pos_;
  std::vector<double> eps_, brug_, dface_, hface_;
  double i_ref_ = 1.0, q_ref_ = 1.0;
  CellState s_;
};

/// Functional form of one implicit step: returns the advanced state.
inline CellState step(const CellState& state, const ParameterSet& params, const MeshSpec& mesh, double I_app,
                      double dt, const SolverOptions& opt = {}) {
  Cell cell(params, mesh, opt);
  cell.set_state(state);
  cell.step_current(I_app, dt);
  return cell.state();
}

}  // namespace qbat
