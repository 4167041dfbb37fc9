#include <catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "qbat/calibration.hpp"

using namespace qbat;

namespace {

VoltageTrace trace(const std::vector<double>& t, const std::vector<double>& v) {
  VoltageTrace tr;
  tr.times = t;
  tr.pack_voltage = v;
  tr.cell_voltage = v;
  tr.applied_current.assign(t.size(), 0.0);
  tr.temperature.assign(t.size(), 298.15);
  return tr;
}

// Two-pass reference: mean square first, then the root.
double brute_rmse(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> sq(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) sq[k] = (a[k] - b[k]) * (a[k] - b[k]);
  long double s = 0.0L;
  for (double x : sq) s += x;
  return std::sqrt(static_cast<double>(s / static_cast<long double>(a.size())));
}

CalibrationProblem small_problem(int budget, std::uint64_t seed) {
  CalibrationProblem pb;
  pb.mesh = {3, 3, 3, 4};
  pb.budget = budget;
  pb.seed = seed;
  RptOptions o;
  o.pulses = 2;
  Dataset d;
  d.name = "pulse";
  d.profile = generate_rpt(RptKind::Pulse, pb.fixed.Q_rated, o);
  SimulationOptions so;
  d.measured = simulate(pb.fixed, pb.mesh, d.profile, so);
  pb.datasets.push_back(d);
  pb.free = {{"D_n", 2e-14, 5e-13, true}, {"i0_n_ref", 0.5, 12.5, true}};
  return pb;
}

}  // namespace

TEST_CASE("rmse worked examples") {
  const std::vector<double> t{1, 2, 3};
  REQUIRE(rmse(trace(t, {3.7, 3.6, 3.5}), trace(t, {3.7, 3.6, 3.5})) == 0.0);
  const double r = rmse(trace(t, {0.0, 0.03, -0.04}), trace(t, {0.0, 0.0, 0.0}));
  REQUIRE(std::abs(r - 0.028867513459481287) < 1e-15);
  REQUIRE(std::round(r * 1e6) / 1e6 == 0.028868);
  std::vector<double> tt(57), a(57), b(57);
  for (int k = 0; k < 57; ++k) {
    tt[k] = k;
    a[k] = 14.0 + 0.01 * k;
    b[k] = a[k] - 0.010;
  }
  REQUIRE(std::abs(rmse(trace(tt, a), trace(tt, b)) - 0.010) < 1e-12);
}

TEST_CASE("rmse matches a brute-force oracle on random traces") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> len(1, 400);
  std::uniform_real_distribution<double> v(10.0, 17.0), dv(-0.2, 0.2);
  for (int c = 0; c < 1000; ++c) {
    const int n = len(rng);
    std::vector<double> t(n), a(n), b(n);
    for (int k = 0; k < n; ++k) {
      t[k] = 0.1 * (k + 1);
      a[k] = v(rng);
      b[k] = a[k] + dv(rng);
    }
    const double ref = brute_rmse(a, b);
    const double got = rmse(trace(t, a), trace(t, b));
    REQUIRE(std::abs(got - ref) <= 1e-12 * ref);
  }
}

TEST_CASE("rmse rejects mismatched traces") {
  const auto a = trace({1, 2, 3}, {1, 1, 1});
  REQUIRE_THROWS_AS(rmse(a, trace({1, 2}, {1, 1})), InputError);
  REQUIRE_THROWS_AS(rmse(a, trace({1, 2, 3.5}, {1, 1, 1})), InputError);
  REQUIRE_THROWS_AS(rmse(trace({}, {}), trace({}, {})), InputError);
}

TEST_CASE("truncated simulations are padded with the cutoff and flagged") {
  const auto m = trace({1, 2, 3, 4}, {14.0, 13.5, 13.0, 12.5});
  const auto s = trace({1, 2}, {14.0, 13.5});
  const auto r = rmse_padded(m, s, 12.0);
  REQUIRE(r.flagged);
  REQUIRE(r.n == 4);
  REQUIRE(std::abs(r.value - std::sqrt((1.0 + 0.25) / 4.0)) < 1e-15);
  REQUIRE_FALSE(rmse_padded(m, m, 12.0).flagged);
}

TEST_CASE("switching keeps an improving incumbent") {
  const std::vector<double> stint{1.0, 0.98, 0.96, 0.94, 0.92, 0.90};
  REQUIRE(switch_strategy(stint, 0, 3) == 0);
}

TEST_CASE("switching fires below the improvement threshold") {
  const std::vector<double> stint{1.0, 1.0, 1.0, 1.0, 1.0, 1.0 - 9e-4};
  REQUIRE(switch_strategy(stint, 1, 3) == 2);
  REQUIRE(switch_strategy(stint, 2, 3) == 0);
}

TEST_CASE("two stalled optimizers alternate") {
  const std::vector<double> flat(6, 0.5);
  int id = 0;
  std::vector<int> seq;
  for (int k = 0; k < 4; ++k) seq.push_back(id = switch_strategy(flat, id, 2));
  REQUIRE(seq == std::vector<int>{1, 0, 1, 0});
}

TEST_CASE("switching waits for a full window and needs one generation") {
  REQUIRE(switch_strategy({1.0, 1.0, 1.0}, 0, 3) == 0);
  REQUIRE_THROWS_AS(switch_strategy({1.0}, 0, 3), InputError);
}

TEST_CASE("RPT profiles") {
  const auto a = generate_rpt(RptKind::Cc0p1C, 2.2);
  for (double I : a.samples) REQUIRE(std::abs(I - 0.22) < 1e-15);
  const auto b = generate_rpt(RptKind::Cc2C, 2.2);
  for (double I : b.samples) REQUIRE(I == 4.4);
  REQUIRE(b.duration() > 0.5 * 3600.0);
  const auto p = generate_rpt(RptKind::Pulse, 2.2);
  REQUIRE(p.sample_rate == 1.0);
  REQUIRE(p.size() == 500);
  for (std::size_t k = 0; k < p.size(); ++k) REQUIRE(p.samples[k] == (k % 50 < 10 ? 4.4 : 0.0));
  REQUIRE(parse_rpt("cc_2c") == RptKind::Cc2C);
  REQUIRE_THROWS_AS(parse_rpt("cc_3c"), InputError);
}

TEST_CASE("unit-cube mapping round-trips") {
  const FreeParameter lin{"R_p", 1e-6, 4e-6, false}, lg{"D_n", 1e-14, 1e-12, true};
  REQUIRE(from_unit(lg, 0.5) == Catch::Approx(1e-13).epsilon(1e-12));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const double x = u(rng);
    REQUIRE(std::abs(to_unit(lin, from_unit(lin, x)) - x) < 1e-12);
    REQUIRE(std::abs(to_unit(lg, from_unit(lg, x)) - x) < 1e-12);
    REQUIRE(from_unit(lg, x) >= lg.lower * (1 - 1e-15));
    REQUIRE(from_unit(lg, x) <= lg.upper * (1 + 1e-15));
  }
}

TEST_CASE("objective is zero at the truth and pure") {
  const auto pb = small_problem(32, 1);
  const auto e0 = evaluate_parameters(pb, pb.fixed);
  REQUIRE_FALSE(e0.failed);
  REQUIRE(e0.total == 0.0);
  auto p = pb.fixed;
  p.D_n *= 1.7;
  const auto e1 = evaluate_parameters(pb, p), e2 = evaluate_parameters(pb, p);
  REQUIRE(e1.total > 0.0);
  REQUIRE(e1.total == e2.total);
}

TEST_CASE("invalid candidates score the penalty") {
  const auto pb = small_problem(32, 1);
  auto p = pb.fixed;
  p.eps_n = 1.5;
  const auto e = evaluate_parameters(pb, p);
  REQUIRE(e.failed);
  REQUIRE(e.total == pb.portfolio.penalty);
}

TEST_CASE("a generation where everything fails is an error") {
  auto pb = small_problem(32, 1);
  pb.free = {{"eps_n", 1.5, 2.0, false}};
  REQUIRE_THROWS_AS(calibrate(pb), CalibrationError);
}

TEST_CASE("problem validation") {
  auto pb = small_problem(32, 1);
  auto bad = pb;
  bad.budget = 31;
  REQUIRE_THROWS_AS(calibrate(bad), InputError);
  bad = pb;
  bad.free[0].lower = bad.free[0].upper;
  REQUIRE_THROWS_AS(calibrate(bad), InputError);
  bad = pb;
  bad.free[0].name = "no_such_parameter";
  REQUIRE_THROWS(calibrate(bad));
  bad = pb;
  bad.datasets[0].measured.times.pop_back();
  REQUIRE_THROWS_AS(calibrate(bad), InputError);
}

TEST_CASE("one generation returns the best initial sample") {
  const auto pb = small_problem(32, 5);
  const auto r = calibrate(pb);
  REQUIRE(r.evaluation_count == 32);
  REQUIRE(r.convergence_history.size() == 32);
  REQUIRE(r.generation_optimizer.empty());
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double best = 1e300;
  for (int i = 0; i < 32; ++i) {
    std::vector<double> v(2);
    for (int d = 0; d < 2; ++d) v[d] = from_unit(pb.free[d], U(rng));
    best = std::min(best, evaluate_parameters(pb, apply_free(pb, v)).total);
  }
  REQUIRE(r.best_rmse == best);
}

TEST_CASE("calibration history is monotone, bounded and deterministic") {
  const auto pb = small_problem(160, 4);
  const auto a = calibrate(pb);
  auto pj = pb;
  pj.jobs = 3;
  const auto b = calibrate(pj);
  REQUIRE(a.convergence_history == b.convergence_history);
  REQUIRE(a.best_values == b.best_values);
  REQUIRE(static_cast<int>(a.convergence_history.size()) == a.evaluation_count);
  for (std::size_t k = 1; k < a.convergence_history.size(); ++k) {
    REQUIRE(a.convergence_history[k].first == static_cast<int>(k) + 1);
    REQUIRE(a.convergence_history[k].second <= a.convergence_history[k - 1].second);
  }
  for (std::size_t i = 0; i < pb.free.size(); ++i) {
    REQUIRE(a.best_values[i] >= pb.free[i].lower);
    REQUIRE(a.best_values[i] <= pb.free[i].upper);
  }
  REQUIRE(a.best_rmse < a.convergence_history[31].second);
  REQUIRE(evaluate_parameters(pb, a.best_parameters).total == a.best_rmse);
}

TEST_CASE("convergence CSV is full precision") {
  CalibrationResult r;
  r.convergence_history = {{1, 0.1}, {2, 1.0 / 3.0}};
  std::ostringstream os;
  write_convergence_csv(os, r);
  REQUIRE(os.str() == "evaluation,best_rmse_v\n1,0.10000000000000001\n2,0.33333333333333331\n");
}

TEST_CASE("problem documents load relative to their directory") {
  const std::string cfg = std::string(QBAT_SOURCE_DIR) + "/configs/calibration_synthetic.json";
  const auto pb = load_problem(cfg);
  REQUIRE(pb.datasets.size() == 2);
  REQUIRE(pb.free.size() == 4);
  REQUIRE(pb.free[0].name == "D_n");
  REQUIRE(pb.free[0].log_scale);
  REQUIRE_FALSE(pb.free[2].log_scale);
  REQUIRE(pb.budget == 2000);
  REQUIRE(pb.seed == 7);
  for (const auto& d : pb.datasets) REQUIRE(d.profile.size() == d.measured.size());
  REQUIRE_NOTHROW(pb.validate());
  REQUIRE_THROWS_AS(problem_from_json(nlohmann::json{{"free", nlohmann::json::array()}}), InputError);
  REQUIRE_THROWS_AS(load_problem("/nonexistent/problem.json"), InputError);
}
