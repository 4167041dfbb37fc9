#pragma once

// Repeated profile replay with ageing, constant-current baseline fits and
// baseline-normalized health reports.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "simulate.hpp"

namespace qbat {

enum class RechargePolicy { Cccv, Teleport };

inline RechargePolicy parse_recharge(std::string_view s) {
  if (s == "cccv") return RechargePolicy::Cccv;
  if (s == "teleport") return RechargePolicy::Teleport;
  throw InputError("unknown recharge policy '" + std::string(s) + "'", "invalid_config");
}

struct ReplayOptions {
  MeshSpec mesh;
  SolverOptions solver;
  int repetitions = 20;
  RechargePolicy recharge = RechargePolicy::Cccv;
  CccvOptions cccv;
  double rest_s = 0.0;          // rest after each recharge
  bool capacity_check = true;   // run fresh/aged 1C capacity tests
  bool keep_traces = false;     // keep first and last discharge traces
};

struct HealthReport {
  std::string tag;
  MotionTag motion = MotionTag::None;
  int cycles = 0;
  int truncated_cycles = 0;
  double charge_throughput = 0.0;  // Ah discharged
  double energy_consumed = 0.0;    // Wh, integral of V_pack * I over discharges
  double lli = 0.0;
  double lam_n = 0.0;
  double lam_p = 0.0;
  double loss_sei_nominal = 0.0;   // Ah-equivalent
  double loss_sei_crack = 0.0;
  double loss_plating = 0.0;
  double capacity_fade = 0.0;
  double initial_inventory = 0.0;  // Ah-equivalent
  double crack_area = 0.0;         // 1/m
  double temp_max = 0.0;           // K
  double temp_mean = 0.0;          // K, time average over discharges
};

struct ReplayResult {
  HealthReport report;
  DegradationState final_state;
  VoltageTrace first_trace;
  VoltageTrace last_trace;
};

inline double mol_to_ah(double mol) { return mol * constants::kFaraday / 3600.0; }

/// Alternates profile discharge and recharge for `repetitions` cycles,
/// carrying the degradation state throughout.
inline ReplayResult replay(const ParameterSet& params, const CurrentProfile& profile, const std::string& tag,
                           const ReplayOptions& o = {}) {
  if (profile.empty()) throw InputError("profile is empty", "empty_input");
  if (o.repetitions < 0) throw InputError("repetitions must be nonnegative");
  Cell cell(params, o.mesh, o.solver);
  cell.initialize(1.0);
  ReplayResult res;
  HealthReport& r = res.report;
  r.tag = tag;
  r.motion = profile.tag;
  const double inventory = cell.initial_inventory();
  r.initial_inventory = mol_to_ah(inventory);
  r.temp_max = cell.temperature();
  double t_int = 0.0, t_dur = 0.0;

  auto recharge = [&](bool conditioning) {
    if (o.recharge == RechargePolicy::Teleport) {
      cell.reset_full(cell.state().degradation);
      return;
    }
    if (conditioning) {
      const auto toggles = cell.params().degradation.toggles;
      cell.set_toggles(DegradationToggles::all_off());
      charge_cccv(cell, o.cccv);
      cell.set_toggles(toggles);
    } else {
      charge_cccv(cell, o.cccv);
    }
    if (o.rest_s > 0.0) rest(cell, o.rest_s);
  };

  if (o.repetitions > 0) recharge(true);
  for (int c = 0; c < o.repetitions; ++c) {
    VoltageTrace tr;
    tr.n_series = params.n_series;
    const bool keep = o.keep_traces && (c == 0 || c + 1 == o.repetitions);
    RunStats st;
    try {
      st = run_profile(cell, profile, keep ? &tr : nullptr);
      if (c + 1 < o.repetitions) recharge(false);
    } catch (const SimulationError& e) {
      throw SimulationError(cell.time(), "cycle " + std::to_string(c + 1) + ": " + e.what());
    }
    if (keep) {
      if (c == 0) res.first_trace = tr;
      if (c + 1 == o.repetitions) res.last_trace = tr;
    }
    ++r.cycles;
    if (st.truncated) ++r.truncated_cycles;
    r.charge_throughput += st.charge_ah;
    r.energy_consumed += st.energy_wh;
    r.temp_max = std::max(r.temp_max, st.t_max);
    t_int += st.t_sum;
    t_dur += st.duration;
  }
  r.temp_mean = t_dur > 0.0 ? t_int / t_dur : cell.temperature();

  const DegradationState& d = cell.state().degradation;
  res.final_state = d;
  r.lli = compute_lli(d, inventory);
  const auto lam = compute_lam(d);
  r.lam_n = lam.negative;
  r.lam_p = lam.positive;
  r.loss_sei_nominal = mol_to_ah(d.li_lost_sei_nom);
  r.loss_sei_crack = mol_to_ah(d.li_lost_sei_crack);
  r.loss_plating = mol_to_ah(d.li_lost_plating);
  r.crack_area = d.a_crack;
  if (o.capacity_check && o.repetitions > 0) {
    const double fresh = discharge_capacity(params, o.mesh, DegradationState::fresh(params), o.solver);
    const double aged = discharge_capacity(params, o.mesh, d, o.solver);
    r.capacity_fade = std::max(0.0, 1.0 - aged / fresh);
  }
  return res;
}

inline nlohmann::json to_json(const HealthReport& r) {
  return {{"tag", r.tag},
          {"motion", std::string(to_string(r.motion))},
          {"cycles", r.cycles},
          {"truncated_cycles", r.truncated_cycles},
          {"charge_throughput_ah", r.charge_throughput},
          {"energy_consumed_wh", r.energy_consumed},
          {"lli", r.lli},
          {"lam_n", r.lam_n},
          {"lam_p", r.lam_p},
          {"loss_sei_nominal_ah", r.loss_sei_nominal},
          {"loss_sei_crack_ah", r.loss_sei_crack},
          {"loss_plating_ah", r.loss_plating},
          {"capacity_fade", r.capacity_fade},
          {"initial_inventory_ah", r.initial_inventory},
          {"crack_area_per_m", r.crack_area},
          {"temp_max_k", r.temp_max},
          {"temp_mean_k", r.temp_mean}};
}

inline HealthReport health_report_from_json(const nlohmann::json& j) {
  try {
    HealthReport r;
    r.tag = j.at("tag").get<std::string>();
    r.motion = parse_motion(j.at("motion").get<std::string>());
    r.cycles = j.at("cycles").get<int>();
    r.truncated_cycles = j.value("truncated_cycles", 0);
    r.charge_throughput = j.at("charge_throughput_ah").get<double>();
    r.energy_consumed = j.at("energy_consumed_wh").get<double>();
    r.lli = j.at("lli").get<double>();
    r.lam_n = j.at("lam_n").get<double>();
    r.lam_p = j.at("lam_p").get<double>();
    r.loss_sei_nominal = j.at("loss_sei_nominal_ah").get<double>();
    r.loss_sei_crack = j.at("loss_sei_crack_ah").get<double>();
    r.loss_plating = j.at("loss_plating_ah").get<double>();
    r.capacity_fade = j.value("capacity_fade", 0.0);
    r.initial_inventory = j.at("initial_inventory_ah").get<double>();
    r.crack_area = j.value("crack_area_per_m", 0.0);
    r.temp_max = j.value("temp_max_k", 0.0);
    r.temp_mean = j.value("temp_mean_k", 0.0);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed health report: ") + e.what(), "invalid_report");
  }
}

enum class Metric { Lli, Lam, SeiNominal, SeiCrack, Plating };
inline constexpr std::array kMetrics = {Metric::Lli, Metric::Lam, Metric::SeiNominal, Metric::SeiCrack,
                                        Metric::Plating};

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::Lli: return "lli";
    case Metric::Lam: return "lam";
    case Metric::SeiNominal: return "sei_nom";
    case Metric::SeiCrack: return "sei_crack";
    case Metric::Plating: return "plating";
  }
  return "";
}

/// LAM is reported as the sum over both electrodes.
inline double metric_value(const HealthReport& r, Metric m) {
  switch (m) {
    case Metric::Lli: return r.lli;
    case Metric::Lam: return r.lam_n + r.lam_p;
    case Metric::SeiNominal: return r.loss_sei_nominal;
    case Metric::SeiCrack: return r.loss_sei_crack;
    case Metric::Plating: return r.loss_plating;
  }
  return 0.0;
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::vector<double> values;     // metric at each baseline energy
  std::vector<double> residuals;  // value - fit
  double max_abs_residual = 0.0;
  // max |1 - value/fit| over baseline points; infinite when any fit value
  // is nonpositive.
  double relative_bound = 0.0;

  double operator()(double energy) const { return intercept + slope * energy; }
};

struct BaselineFit {
  std::vector<double> energies;
  std::vector<std::string> tags;
  std::array<LineFit, kMetrics.size()> lines;

  const LineFit& line(Metric m) const { return lines[static_cast<std::size_t>(m)]; }
};

/// Ordinary least-squares line through (x_i, y_i).
inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.values = y;
  for (std::size_t i = 0; i < n; ++i) {
    const double fit = f(x[i]);
    const double res = y[i] - fit;
    f.residuals.push_back(res);
    f.max_abs_residual = std::max(f.max_abs_residual, std::abs(res));
    f.relative_bound = fit > 0.0 ? std::max(f.relative_bound, std::abs(res) / fit)
                                 : std::numeric_limits<double>::infinity();
  }
  return f;
}

/// Per-metric least-squares lines against energy over constant-current
/// reports. Reports of other motions are ignored.
inline BaselineFit fit_baselines(const std::vector<HealthReport>& reports) {
  BaselineFit fit;
  std::vector<const HealthReport*> cc;
  for (const auto& r : reports)
    if (r.motion == MotionTag::Cc) cc.push_back(&r);
  if (cc.size() < 2) throw InputError("baseline fit needs at least two constant-current reports", "insufficient_baselines");
  for (const auto* r : cc) {
    for (double e : fit.energies)
      if (e == r->energy_consumed) throw InputError("baseline energies must be distinct", "duplicate_energy");
    fit.energies.push_back(r->energy_consumed);
    fit.tags.push_back(r->tag);
  }
  for (Metric m : kMetrics) {
    std::vector<double> y;
    for (const auto* r : cc) y.push_back(metric_value(*r, m));
    fit.lines[static_cast<std::size_t>(m)] = fit_line(fit.energies, y);
  }
  return fit;
}

/// Metric divided by the baseline line at the report's energy.
inline double normalize_metric(const HealthReport& r, const BaselineFit& fit, Metric m) {
  const double base = fit.line(m)(r.energy_consumed);
  if (!(base > 0.0))
    throw NormalizationError("baseline prediction for " + std::string(to_string(m)) + " at " +
                             std::to_string(r.energy_consumed) + " Wh is not positive");
  return metric_value(r, m) / base;
}

struct NormalizedMetrics {
  std::array<std::optional<double>, kMetrics.size()> value;  // empty when flagged

  const std::optional<double>& operator[](Metric m) const { return value[static_cast<std::size_t>(m)]; }
};

inline NormalizedMetrics normalize(const HealthReport& r, const BaselineFit& fit) {
  NormalizedMetrics out;
  for (Metric m : kMetrics) {
    try {
      out.value[static_cast<std::size_t>(m)] = normalize_metric(r, fit, m);
    } catch (const NormalizationError&) {
    }
  }
  return out;
}

struct MotionRow {
  std::string tag;
  double energy_wh = 0.0;
  NormalizedMetrics norm;
};

/// One row per report, sorted by energy ascending (ties keep input order).
inline std::vector<MotionRow> motion_report(const std::vector<HealthReport>& reports, const BaselineFit& fit) {
  if (reports.empty()) throw InputError("motion report needs at least one report", "empty_input");
  std::vector<MotionRow> rows;
  for (const auto& r : reports) rows.push_back({r.tag, r.energy_consumed, normalize(r, fit)});
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.energy_wh < b.energy_wh; });
  return rows;
}

inline constexpr std::array<const char*, 7> kReportColumns = {
    "tag", "energy_wh", "lli_norm", "lam_norm", "sei_nom_norm", "sei_crack_norm", "plating_norm"};

namespace detail {
inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

/// Comparison table; flagged (unnormalizable) cells are left empty.
inline void write_report_csv(std::ostream& out, const std::vector<MotionRow>& rows) {
  for (std::size_t c = 0; c < kReportColumns.size(); ++c) out << (c ? "," : "") << kReportColumns[c];
  out << '\n';
  for (const auto& r : rows) {
    out << r.tag << ',' << detail::fmt(r.energy_wh);
    for (Metric m : kMetrics) {
      out << ',';
      if (r.norm[m]) out << detail::fmt(*r.norm[m]);
    }
    out << '\n';
  }
}

inline nlohmann::json to_json(const std::vector<MotionRow>& rows) {
  auto j = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row = {{"tag", r.tag}, {"energy_wh", r.energy_wh}};
    for (std::size_t m = 0; m < kMetrics.size(); ++m) {
      const std::string key = std::string(to_string(kMetrics[m])) + "_norm";
      row[key] = r.norm.value[m] ? nlohmann::json(*r.norm.value[m]) : nlohmann::json(nullptr);
    }
    j.push_back(row);
  }
  return j;
}

inline nlohmann::json to_json(const BaselineFit& f) {
  nlohmann::json j = {{"energies_wh", f.energies}, {"tags", f.tags}};
  for (Metric m : kMetrics) {
    const auto& l = f.line(m);
    j["lines"][std::string(to_string(m))] = {{"slope", l.slope},
                                             {"intercept", l.intercept},
                                             {"values", l.values},
                                             {"residuals", l.residuals},
                                             {"max_abs_residual", l.max_abs_residual},
                                             {"relative_bound", std::isfinite(l.relative_bound)
                                                                    ? nlohmann::json(l.relative_bound)
                                                                    : nlohmann::json(nullptr)}};
  }
  return j;
}

/// Tidy plot data for one metric: raw metric against energy, one series per
/// report tag plus the baseline line evaluated at every report energy.
inline void write_plot_csv(std::ostream& out, const std::vector<HealthReport>& reports, const BaselineFit& fit,
                           Metric m) {
  out << "series,x,y\n";
  for (const auto& r : reports)
    out << r.tag << ',' << detail::fmt(r.energy_consumed) << ',' << detail::fmt(metric_value(r, m)) << '\n';
  std::vector<double> xs;
  for (const auto& r : reports) xs.push_back(r.energy_consumed);
  std::sort(xs.begin(), xs.end());
  for (double x : xs) out << "baseline_fit," << detail::fmt(x) << ',' << detail::fmt(fit.line(m)(x)) << '\n';
}

}  // namespace qbat
