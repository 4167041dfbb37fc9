#pragma once

// Profile integration on top of the single-step cell: adaptive sub-stepping,
// voltage traces, CC-CV recharge and the 1C capacity check.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "cell.hpp"
#include "current_profile.hpp"
#include "errors.hpp"

namespace qbat {

struct VoltageTrace {
  std::vector<double> times;
  std::vector<double> applied_current;
  std::vector<double> cell_voltage;
  std::vector<double> pack_voltage;
  std::vector<double> temperature;
  int n_series = 1;
  bool truncated = false;

  std::size_t size() const { return times.size(); }

  void push(double t, double i, double v_cell, double T) {
    times.push_back(t);
    applied_current.push_back(i);
    cell_voltage.push_back(v_cell);
    pack_voltage.push_back(static_cast<double>(n_series) * v_cell);
    temperature.push_back(T);
  }
};

inline void write_trace_csv(std::ostream& out, const VoltageTrace& tr) {
  out << "t_s,i_a,v_cell_v,v_pack_v,temp_k\n";
  out.precision(17);
  for (std::size_t k = 0; k < tr.size(); ++k)
    out << tr.times[k] << ',' << tr.applied_current[k] << ',' << tr.cell_voltage[k] << ',' << tr.pack_voltage[k]
        << ',' << tr.temperature[k] << '\n';
}

inline void write_trace_csv(const std::string& path, const VoltageTrace& tr) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'", "unwritable_path");
  write_trace_csv(out, tr);
}

/// Reads a trace CSV. Columns are located by header name. With both voltage
/// columns present `v_pack_v` wins unless `prefer_cell`; `n_series` derives
/// the other column.
inline VoltageTrace read_trace_csv(const std::string& path, int n_series, bool prefer_cell = false) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open trace '" + path + "'", "missing_path");
  std::string line;
  if (!std::getline(in, line)) throw InputError("trace '" + path + "' is empty", "empty_input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  auto find = [&](const std::string& name) {
    auto it = std::find(cols.begin(), cols.end(), name);
    return it == cols.end() ? -1 : static_cast<int>(it - cols.begin());
  };
  const int ct = find("t_s"), ci = find("i_a"), cc = find("v_cell_v"), cp = find("v_pack_v"), cT = find("temp_k");
  if (ct < 0 || (cc < 0 && cp < 0)) throw ParseError(1, "trace header needs t_s and v_cell_v or v_pack_v");
  const bool use_pack = cp >= 0 && !(prefer_cell && cc >= 0);
  VoltageTrace tr;
  tr.n_series = n_series;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) {
      char* end = nullptr;
      const double d = std::strtod(f.c_str(), &end);
      if (f.empty() || end != f.c_str() + f.size()) throw ParseError(row, "non-numeric field '" + f + "'");
      v.push_back(d);
    }
    if (v.size() != cols.size()) throw ParseError(row, "expected " + std::to_string(cols.size()) + " fields");
    const double t = v[ct];
    if (!tr.times.empty() && !(t > tr.times.back())) throw ParseError(row, "time must be strictly increasing");
    const double vcell = use_pack ? v[cp] / n_series : v[cc];
    tr.times.push_back(t);
    tr.applied_current.push_back(ci >= 0 ? v[ci] : 0.0);
    tr.cell_voltage.push_back(vcell);
    tr.pack_voltage.push_back(use_pack ? v[cp] : n_series * vcell);
    tr.temperature.push_back(cT >= 0 ? v[cT] : 0.0);
  }
  return tr;
}

struct RunStats {
  std::size_t samples_done = 0;
  bool truncated = false;
  double charge_ah = 0.0;   // discharge positive
  double energy_wh = 0.0;   // integral of V_pack * I dt
  double t_max = 0.0;       // peak temperature
  double t_sum = 0.0;       // time integral of temperature
  double duration = 0.0;
};

/// Runs a profile from the cell's current state. One trace sample is
/// appended per completed profile sample at the end of its interval.
inline RunStats run_profile(Cell& cell, const CurrentProfile& profile, VoltageTrace* trace = nullptr) {
  const auto& opt = cell.options();
  const int ns = cell.params().n_series;
  const double period = profile.period();
  RunStats st;
  st.t_max = cell.temperature();
  double h = period;
  int fast = 0;
  const double t_start = cell.time();
  for (std::size_t k = 0; k < profile.size(); ++k) {
    const double I = profile.samples[k];
    double remaining = period;
    while (remaining > 1e-12 * period) {
      const double dt = std::min(h, remaining);
      StepInfo info;
      try {
        info = cell.step_current(I, dt);
      } catch (const StepFailure& e) {
        h = 0.5 * dt;
        fast = 0;
        if (h < opt.dt_floor) throw SimulationError(cell.time(), std::string("step failed below dt floor: ") + e.what());
        continue;
      }
      remaining -= dt;
      const double v = cell.voltage();
      st.charge_ah += I * dt / 3600.0;
      st.energy_wh += ns * v * I * dt / 3600.0;
      st.t_max = std::max(st.t_max, cell.temperature());
      st.t_sum += cell.temperature() * dt;
      st.duration += dt;
      if (v < opt.v_min || v > opt.v_max) {
        st.truncated = true;
        if (trace) trace->truncated = true;
        return st;
      }
      if (info.iterations <= 3 && ++fast >= 3 && h < period) {
        h = std::min(2.0 * h, period);
        fast = 0;
      }
    }
    ++st.samples_done;
    if (trace) trace->push(t_start + static_cast<double>(k + 1) * period, I, cell.voltage(), cell.temperature());
  }
  return st;
}

struct SimulationOptions {
  SolverOptions solver;
  double initial_soc = 1.0;
};

/// Fresh cell at `initial_soc`, integrated over the profile.
inline VoltageTrace simulate(const ParameterSet& params, const MeshSpec& mesh, const CurrentProfile& profile,
                             const SimulationOptions& options = {}) {
  if (profile.empty()) throw InputError("profile is empty", "empty_input");
  profile.validate(std::numeric_limits<double>::infinity());
  Cell cell(params, mesh, options.solver);
  cell.initialize(options.initial_soc);
  VoltageTrace tr;
  tr.n_series = params.n_series;
  run_profile(cell, profile, &tr);
  return tr;
}

struct CccvOptions {
  double current = 0.0;      // A, magnitude; 0 selects 1C
  double taper = 0.05;       // CV ends below taper * current
  double dt_cc = 10.0;
  double dt_cv = 10.0;
  double max_time = 6.0 * 3600.0;
};

struct ChargeStats {
  double charge_ah = 0.0;    // positive = charge accepted
  double energy_wh = 0.0;    // positive = energy delivered to the pack
  double duration = 0.0;
};

/// CC-CV charge to the upper voltage cutoff.
inline ChargeStats charge_cccv(Cell& cell, const CccvOptions& o = {}) {
  const auto& opt = cell.options();
  const int ns = cell.params().n_series;
  const double Ic = o.current > 0.0 ? o.current : cell.params().one_c_current();
  ChargeStats st;
  auto account = [&](double I, double dt) {
    st.charge_ah += -I * dt / 3600.0;
    st.energy_wh += -ns * cell.voltage() * I * dt / 3600.0;
    st.duration += dt;
  };
  double h = o.dt_cc;
  while (st.duration < o.max_time && cell.voltage() < opt.v_max) {
    const CellState saved = cell.state();
    try {
      cell.step_current(-Ic, h);
    } catch (const StepFailure&) {
      h *= 0.5;
      if (h < opt.dt_floor) throw SimulationError(cell.time(), "CC charge step failed below dt floor");
      continue;
    }
    if (cell.voltage() > opt.v_max) {
      cell.set_state(saved);
      if (h < 0.25) break;
      h *= 0.25;
      continue;
    }
    account(-Ic, h);
  }
  h = std::min(1.0, o.dt_cv);
  const double cut = o.taper * Ic;
  while (st.duration < o.max_time) {
    try {
      cell.step_voltage(opt.v_max, h);
    } catch (const StepFailure&) {
      h *= 0.5;
      if (h < opt.dt_floor) throw SimulationError(cell.time(), "CV charge step failed below dt floor");
      continue;
    }
    const double I = cell.state().current;
    account(I, h);
    if (-I <= cut) break;
    h = std::min(2.0 * h, o.dt_cv);
  }
  return st;
}

/// Holds zero current for `duration` seconds.
inline void rest(Cell& cell, double duration, double dt = 30.0) {
  double left = duration;
  while (left > 1e-9) {
    const double h = std::min(dt, left);
    cell.step_current(0.0, h);
    left -= h;
  }
}

/// Dischargeable capacity (Ah) at 1C from the fully charged state implied by
/// a degradation state, with ageing suspended during the test.
inline double discharge_capacity(const ParameterSet& params, const MeshSpec& mesh, const DegradationState& d,
                                 const SolverOptions& solver = {}, double dt = 10.0) {
  ParameterSet p = params;
  p.degradation.toggles = DegradationToggles::all_off();
  Cell cell(p, mesh, solver);
  cell.reset_full(d);
  const double I = p.one_c_current();
  const double vmin = solver.v_min;
  double t = 0.0;
  double v_prev = cell.voltage();
  double h = dt;
  while (t < 4.0 * 3600.0) {
    try {
      cell.step_current(I, h);
    } catch (const StepFailure&) {
      h *= 0.5;
      if (h < solver.dt_floor) throw SimulationError(t, "capacity test failed");
      continue;
    }
    const double v = cell.voltage();
    if (v < vmin) return I * (t + h * (v_prev - vmin) / (v_prev - v)) / 3600.0;
    t += h;
    v_prev = v;
  }
  return I * t / 3600.0;
}

}  // namespace qbat
