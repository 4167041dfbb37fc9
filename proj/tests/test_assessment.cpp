#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "qbat/assessment.hpp"
#include "qbat/profiles.hpp"

using namespace qbat;

namespace {

ReplayOptions small(int reps) {
  ReplayOptions o;
  o.mesh = {4, 3, 4, 6};
  o.repetitions = reps;
  o.capacity_check = false;
  return o;
}

HealthReport cc_report(const std::string& tag, double energy, double lli) {
  HealthReport r;
  r.tag = tag;
  r.motion = MotionTag::Cc;
  r.energy_consumed = energy;
  r.lli = lli;
  r.lam_n = lli / 2;
  r.loss_sei_nominal = lli;
  r.loss_sei_crack = lli;
  r.loss_plating = lli;
  return r;
}

void require_additive(const HealthReport& r) {
  const double sum = r.loss_sei_nominal + r.loss_sei_crack + r.loss_plating;
  REQUIRE(std::abs(r.lli * r.initial_inventory - sum) <= 1e-9 * std::max(sum, 1e-300));
  REQUIRE(r.loss_sei_nominal >= 0.0);
  REQUIRE(r.loss_sei_crack >= 0.0);
  REQUIRE(r.loss_plating >= 0.0);
  REQUIRE(r.lam_n >= 0.0);
  REQUIRE(r.lam_p >= 0.0);
}

}  // namespace

TEST_CASE("zero repetitions report nothing") {
  const auto r = replay(ParameterSet{}, constant_current(16, 60, 10), "cc", small(0)).report;
  REQUIRE(r.cycles == 0);
  REQUIRE(r.charge_throughput == 0.0);
  REQUIRE(r.energy_consumed == 0.0);
  for (Metric m : kMetrics) REQUIRE(metric_value(r, m) == 0.0);
  REQUIRE(r.capacity_fade == 0.0);
}

TEST_CASE("replay rejects an empty profile") {
  CurrentProfile p;
  REQUIRE_THROWS_AS(replay(ParameterSet{}, p, "x", small(1)), InputError);
}

TEST_CASE("higher constant current degrades more") {
  const ParameterSet p;
  const auto a = replay(p, constant_current(16, 120, 10), "cc_16A", small(3)).report;
  const auto b = replay(p, constant_current(22, 120, 10), "cc_22A", small(3)).report;
  require_additive(a);
  require_additive(b);
  REQUIRE(std::abs(a.charge_throughput - 3 * 16 * 120 / 3600.0) < 1e-9);
  REQUIRE(b.lli > a.lli);
  REQUIRE(b.loss_sei_crack / b.charge_throughput > a.loss_sei_crack / a.charge_throughput);
  REQUIRE(b.energy_consumed > a.energy_consumed);
  REQUIRE(a.energy_consumed > 0.0);
  REQUIRE(a.temp_max >= a.temp_mean);
}

TEST_CASE("crack-dominated ageing degrades more per ampere-hour at higher current") {
  ParameterSet p;
  p.degradation.k_cr *= 1000.0;
  const auto a = replay(p, constant_current(16, 240, 10), "cc_16A", small(6)).report;
  const auto b = replay(p, constant_current(22, 240, 10), "cc_22A", small(6)).report;
  require_additive(a);
  require_additive(b);
  REQUIRE(b.lli / b.charge_throughput >= a.lli / a.charge_throughput);
}

TEST_CASE("without ageing teleport cycles repeat exactly") {
  ParameterSet p;
  p.degradation.toggles = DegradationToggles::all_off();
  auto o = small(4);
  o.capacity_check = true;
  o.keep_traces = true;
  o.recharge = RechargePolicy::Teleport;
  const auto r = replay(p, constant_current(20, 120, 10), "cc", o);
  REQUIRE(r.report.capacity_fade == 0.0);
  REQUIRE(r.report.lli == 0.0);
  REQUIRE(r.first_trace.size() == r.last_trace.size());
  for (std::size_t k = 0; k < r.first_trace.size(); ++k)
    REQUIRE(std::abs(r.first_trace.pack_voltage[k] - r.last_trace.pack_voltage[k]) < 1e-9);
}

TEST_CASE("without ageing CC-CV cycles settle to a periodic state") {
  ParameterSet p;
  p.degradation.toggles = DegradationToggles::all_off();
  auto o = small(2);
  o.capacity_check = true;
  o.keep_traces = true;
  o.rest_s = 4.0 * 3600.0;
  const auto prof = constant_current(20, 120, 10);
  const auto second = replay(p, prof, "cc", o);
  o.repetitions = 3;
  const auto third = replay(p, prof, "cc", o);
  o.repetitions = 4;
  const auto fourth = replay(p, prof, "cc", o);
  REQUIRE(fourth.report.capacity_fade == 0.0);
  REQUIRE(fourth.report.lli == 0.0);
  double d23 = 0.0, d34 = 0.0;
  for (std::size_t k = 0; k < second.last_trace.size(); ++k) {
    d23 = std::max(d23, std::abs(second.last_trace.pack_voltage[k] - third.last_trace.pack_voltage[k]));
    d34 = std::max(d34, std::abs(third.last_trace.pack_voltage[k] - fourth.last_trace.pack_voltage[k]));
  }
  REQUIRE(d34 < d23);
  REQUIRE(d34 < 1e-3);
}

TEST_CASE("replays are deterministic") {
  const ParameterSet p;
  const auto prof = square_wave(30, 5, 3, 0.5, 60, 10);
  const auto a = replay(p, prof, "sq", small(2)).report;
  const auto b = replay(p, prof, "sq", small(2)).report;
  REQUIRE(to_json(a).dump() == to_json(b).dump());
}

TEST_CASE("health reports round-trip through JSON") {
  const auto r = replay(ParameterSet{}, square_wave(30, 5, 3, 0.5, 60, 10), "sq", small(1)).report;
  const auto q = health_report_from_json(to_json(r));
  REQUIRE(to_json(q).dump() == to_json(r).dump());
  REQUIRE_THROWS_AS(health_report_from_json(nlohmann::json::object()), InputError);
}

TEST_CASE("two-point fit interpolates exactly") {
  const auto f = fit_line({1.0, 3.0}, {2.0, 6.0});
  REQUIRE(f.slope == 2.0);
  REQUIRE(f.intercept == 0.0);
  REQUIRE(f.max_abs_residual == 0.0);
}

TEST_CASE("collinear baselines recover the line") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-3.0, 3.0), e(10.0, 500.0);
  for (int c = 0; c < 200; ++c) {
    const double m = std::pow(10.0, u(rng)), b = std::pow(10.0, u(rng) - 2.0);
    std::vector<double> x(4), y(4);
    for (int i = 0; i < 4; ++i) {
      x[i] = e(rng) + 500.0 * i;
      y[i] = b + m * x[i];
    }
    const auto f = fit_line(x, y);
    REQUIRE(std::abs(f.slope - m) <= 1e-12 * m);
    REQUIRE(std::abs(f(x[0]) - y[0]) <= 1e-12 * y[0]);
  }
}

TEST_CASE("baseline fit validation") {
  REQUIRE_THROWS_AS(fit_baselines({cc_report("a", 10, 1e-3)}), InputError);
  REQUIRE_THROWS_AS(fit_baselines({cc_report("a", 10, 1e-3), cc_report("b", 10, 2e-3)}), InputError);
  HealthReport motion = cc_report("m", 20, 1e-3);
  motion.motion = MotionTag::Hover;
  const auto fit = fit_baselines({cc_report("a", 10, 1e-3), motion, cc_report("b", 30, 3e-3)});
  REQUIRE(fit.tags == std::vector<std::string>{"a", "b"});
}

TEST_CASE("normalization is a ratio to the baseline line") {
  const auto fit = fit_baselines({cc_report("a", 10, 1e-3), cc_report("b", 30, 1e-3)});
  HealthReport r = cc_report("m", 20, 2e-3);
  r.motion = MotionTag::Vertical;
  REQUIRE(std::abs(normalize_metric(r, fit, Metric::Lli) - 2.0) < 1e-12);
  const auto zero = fit_baselines({cc_report("a", 10, 0.0), cc_report("b", 30, 0.0)});
  REQUIRE_THROWS_AS(normalize_metric(r, zero, Metric::Lli), NormalizationError);
  const auto n = normalize(r, zero);
  for (Metric m : kMetrics) REQUIRE_FALSE(n[m].has_value());
}

TEST_CASE("comparison table schema and ordering") {
  const std::vector<HealthReport> cc{cc_report("cc_16A", 100, 1e-3), cc_report("cc_22A", 140, 1.5e-3)};
  const auto fit = fit_baselines(cc);
  std::vector<HealthReport> all{cc_report("vertical", 150, 3e-3), cc_report("hover", 90, 0.8e-3),
                                cc_report("horizontal", 120, 1.4e-3), cc[0]};
  for (int i = 0; i < 3; ++i) all[i].motion = MotionTag::Hover;
  const auto rows = motion_report(all, fit);
  REQUIRE(rows.size() == 4);
  for (std::size_t k = 1; k < rows.size(); ++k) REQUIRE(rows[k - 1].energy_wh <= rows[k].energy_wh);
  REQUIRE(rows[1].tag == "cc_16A");
  for (Metric m : kMetrics) REQUIRE(std::abs(*rows[1].norm[m] - 1.0) < 1e-12);
  std::ostringstream os;
  write_report_csv(os, rows);
  std::string header;
  std::getline(std::istringstream(os.str()) >> std::ws, header);
  REQUIRE(header == "tag,energy_wh,lli_norm,lam_norm,sei_nom_norm,sei_crack_norm,plating_norm");
  const auto j = to_json(rows);
  REQUIRE(j.size() == 4);
  for (const auto& row : j) REQUIRE(row.size() == kReportColumns.size());
  std::ostringstream plot;
  write_plot_csv(plot, all, fit, Metric::Lli);
  REQUIRE(plot.str().rfind("series,x,y\n", 0) == 0);
  REQUIRE_THROWS_AS(motion_report({}, fit), InputError);
}

TEST_CASE("simulated baselines self-normalize within the fit bound") {
  const ParameterSet p;
  std::vector<HealthReport> cc;
  for (double I : {16.0, 18.0, 20.0, 22.0}) {
    auto prof = constant_current(I, 120, 10);
    cc.push_back(replay(p, prof, "cc_" + std::to_string(static_cast<int>(I)) + "A", small(2)).report);
    require_additive(cc.back());
  }
  const auto fit = fit_baselines(cc);
  for (const auto& r : cc) {
    const auto n = normalize(r, fit);
    for (Metric m : kMetrics) {
      const auto& line = fit.line(m);
      if (!std::isfinite(line.relative_bound)) continue;
      REQUIRE(n[m].has_value());
      REQUIRE(std::abs(1.0 - *n[m]) <= line.relative_bound * (1.0 + 1e-9));
    }
  }
}

TEST_CASE("ripple raises crack SEI above the constant-current line") {
  const ParameterSet p;
  std::vector<HealthReport> reps;
  for (double I : {16.0, 22.0}) reps.push_back(replay(p, constant_current(I, 120, 10), "cc", small(2)).report);
  const auto fit = fit_baselines(reps);
  const auto sq = replay(p, square_wave(38, 0, 10, 0.5, 120, 10), "square", small(2)).report;
  const auto cc = replay(p, constant_current(19, 120, 10), "cc_19A", small(2)).report;
  require_additive(sq);
  REQUIRE(std::abs(sq.charge_throughput - cc.charge_throughput) < 1e-9);
  REQUIRE(sq.loss_sei_crack >= cc.loss_sei_crack);
  REQUIRE(sq.crack_area >= cc.crack_area);
  REQUIRE(normalize_metric(sq, fit, Metric::SeiCrack) > 1.0);
}

TEST_CASE("recharge policy parsing") {
  REQUIRE(parse_recharge("cccv") == RechargePolicy::Cccv);
  REQUIRE(parse_recharge("teleport") == RechargePolicy::Teleport);
  REQUIRE_THROWS_AS(parse_recharge("fast"), InputError);
}
