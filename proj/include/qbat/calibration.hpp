#pragma once

// Parameter estimation against voltage-current data: an RMSE objective over
// pack voltages and a switching portfolio of population optimizers (DE, PSO,
// CMA-ES) sharing one archive.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "config.hpp"
#include "profiles.hpp"
#include "simulate.hpp"

namespace qbat {

/// Root-mean-square difference of pack voltages. Traces must have equal
/// length and matching timestamps.
inline double rmse(const VoltageTrace& measured, const VoltageTrace& simulated) {
  if (measured.size() != simulated.size())
    throw InputError("trace lengths differ (" + std::to_string(measured.size()) + " vs " +
                     std::to_string(simulated.size()) + ")", "trace_mismatch");
  if (measured.size() == 0) throw InputError("traces are empty", "trace_mismatch");
  double ss = 0.0;
  for (std::size_t k = 0; k < measured.size(); ++k) {
    const double tm = measured.times[k], tsim = simulated.times[k];
    if (std::abs(tm - tsim) > 1e-9 * std::max(1.0, std::abs(tm)))
      throw InputError("timestamps differ at sample " + std::to_string(k), "trace_mismatch");
    const double r = measured.pack_voltage[k] - simulated.pack_voltage[k];
    ss += r * r;
  }
  return std::sqrt(ss / static_cast<double>(measured.size()));
}

struct PaddedRmse {
  double value = 0.0;
  double sse = 0.0;
  std::size_t n = 0;
  bool flagged = false;  // simulation was truncated and padded
};

/// RMSE against a simulation that may have stopped early at a cutoff; the
/// missing tail is filled with the cutoff pack voltage.
inline PaddedRmse rmse_padded(const VoltageTrace& measured, const VoltageTrace& simulated, double cutoff_pack) {
  if (simulated.size() > measured.size()) throw InputError("simulated trace is longer than measured", "trace_mismatch");
  PaddedRmse out;
  out.n = measured.size();
  out.flagged = simulated.size() < measured.size();
  for (std::size_t k = 0; k < measured.size(); ++k) {
    double v = cutoff_pack;
    if (k < simulated.size()) {
      if (std::abs(measured.times[k] - simulated.times[k]) > 1e-9 * std::max(1.0, std::abs(measured.times[k])))
        throw InputError("timestamps differ at sample " + std::to_string(k), "trace_mismatch");
      v = simulated.pack_voltage[k];
    }
    const double r = measured.pack_voltage[k] - v;
    out.sse += r * r;
  }
  out.value = out.n ? std::sqrt(out.sse / static_cast<double>(out.n)) : 0.0;
  return out;
}

enum class RptKind { Cc0p1C, Cc2C, Pulse };

inline RptKind parse_rpt(std::string_view s) {
  if (s == "cc_0p1c") return RptKind::Cc0p1C;
  if (s == "cc_2c") return RptKind::Cc2C;
  if (s == "pulse") return RptKind::Pulse;
  throw InputError("unknown RPT kind '" + std::string(s) + "'", "invalid_config");
}

inline std::string_view to_string(RptKind k) {
  switch (k) {
    case RptKind::Cc0p1C: return "cc_0p1c";
    case RptKind::Cc2C: return "cc_2c";
    case RptKind::Pulse: return "pulse";
  }
  return "";
}

struct RptOptions {
  int pulses = 10;
  double pulse_s = 10.0;
  double rest_s = 40.0;
};

/// Reference performance test profiles. Constant-current tests run past the
/// nominal discharge time and end at the voltage cutoff; the pulse test
/// repeats 2C pulses separated by rests at 1 Hz.
inline CurrentProfile generate_rpt(RptKind kind, double rated_capacity_ah, const RptOptions& o = {}) {
  if (!(rated_capacity_ah > 0.0)) throw InputError("rated capacity must be positive");
  CurrentProfile p;
  switch (kind) {
    case RptKind::Cc0p1C:
      p = constant_current(0.1 * rated_capacity_ah, 11.0 * 3600.0, 1.0 / 60.0);
      break;
    case RptKind::Cc2C:
      p = constant_current(2.0 * rated_capacity_ah, 0.55 * 3600.0, 0.2);
      break;
    case RptKind::Pulse: {
      p.sample_rate = 1.0;
      const auto on = static_cast<std::size_t>(std::llround(o.pulse_s));
      const auto off = static_cast<std::size_t>(std::llround(o.rest_s));
      for (int k = 0; k < o.pulses; ++k) {
        p.samples.insert(p.samples.end(), on, 2.0 * rated_capacity_ah);
        p.samples.insert(p.samples.end(), off, 0.0);
      }
      break;
    }
  }
  p.tag = MotionTag::Other;
  p.source = "rpt:" + std::string(to_string(kind));
  return p;
}

struct Dataset {
  std::string name;
  CurrentProfile profile;
  VoltageTrace measured;
  double weight = 1.0;
  double initial_soc = 1.0;
};

struct FreeParameter {
  std::string name;
  double lower = 0.0;
  double upper = 0.0;
  bool log_scale = false;
};

/// Parameters spanning decades are searched in log space.
inline bool default_log_scale(std::string_view name) {
  return name.starts_with("D_") || name.starts_with("i0_") || name == "k_sei" || name == "k_cr";
}

struct PortfolioOptions {
  int population = 32;
  int window = 5;              // generations per switching decision
  double switch_delta = 1e-3;  // relative improvement threshold
  int stagnation_generations = 20;
  double stagnation_delta = 1e-5;
  double penalty = 10.0;       // V, score of failed simulations
};

struct CalibrationProblem {
  std::vector<Dataset> datasets;
  std::vector<FreeParameter> free;
  ParameterSet fixed;
  MeshSpec mesh{4, 3, 4, 6};
  SolverOptions solver;
  int budget = 2000;
  std::uint64_t seed = 1;
  int jobs = 1;
  PortfolioOptions portfolio;

  void validate() const {
    if (datasets.empty()) throw InputError("calibration needs at least one dataset", "invalid_problem");
    if (free.empty()) throw InputError("calibration needs at least one free parameter", "invalid_problem");
    for (const auto& f : free) {
      ParameterSet probe = fixed;
      set_parameter(probe, f.name, get_parameter(probe, f.name));
      if (!std::isfinite(f.lower) || !std::isfinite(f.upper) || !(f.lower < f.upper))
        throw InputError("bounds of '" + f.name + "' must be finite with lower < upper", "invalid_bounds");
      if (f.log_scale && !(f.lower > 0.0))
        throw InputError("log-scaled '" + f.name + "' needs a positive lower bound", "invalid_bounds");
    }
    if (budget < portfolio.population)
      throw InputError("budget must be at least the population size", "invalid_problem");
    for (const auto& d : datasets) {
      if (d.profile.size() != d.measured.size())
        throw InputError("dataset '" + d.name + "' profile and measured trace lengths differ", "trace_mismatch");
      const double per = d.profile.period();
      for (std::size_t k = 0; k < d.measured.size(); ++k)
        if (std::abs(d.measured.times[k] - d.measured.times[0] - static_cast<double>(k) * per) > 1e-6 * per)
          throw InputError("dataset '" + d.name + "' measured times do not match the profile sampling",
                           "trace_mismatch");
    }
  }
};

struct Evaluation {
  double total = 0.0;
  std::vector<double> per_dataset;
  bool failed = false;
  bool flagged = false;
};

inline double from_unit(const FreeParameter& f, double u) {
  u = std::clamp(u, 0.0, 1.0);
  if (f.log_scale) return std::exp(std::log(f.lower) + u * (std::log(f.upper) - std::log(f.lower)));
  return f.lower + u * (f.upper - f.lower);
}

inline double to_unit(const FreeParameter& f, double v) {
  if (f.log_scale) return (std::log(v) - std::log(f.lower)) / (std::log(f.upper) - std::log(f.lower));
  return (v - f.lower) / (f.upper - f.lower);
}

inline ParameterSet apply_free(const CalibrationProblem& pb, const std::vector<double>& values) {
  ParameterSet p = pb.fixed;
  for (std::size_t i = 0; i < pb.free.size(); ++i) set_parameter(p, pb.free[i].name, values[i]);
  return p;
}

/// Weighted pooled RMSE of a parameter set over every dataset. Failures
/// score the penalty instead of throwing.
inline Evaluation evaluate_parameters(const CalibrationProblem& pb, const ParameterSet& p) {
  Evaluation ev;
  double num = 0.0, den = 0.0;
  try {
    validate(p);
    for (const auto& d : pb.datasets) {
      SimulationOptions so;
      so.solver = pb.solver;
      so.initial_soc = d.initial_soc;
      VoltageTrace sim = simulate(p, pb.mesh, d.profile, so);
      const double t0 = d.measured.times.empty() ? 0.0 : d.measured.times[0] - d.profile.period();
      for (double& t : sim.times) t += t0;
      double cutoff = pb.solver.v_min;
      if (sim.size() < d.profile.size() && d.profile.samples[sim.size()] < 0.0) cutoff = pb.solver.v_max;
      const auto r = rmse_padded(d.measured, sim, p.n_series * cutoff);
      ev.per_dataset.push_back(r.value);
      ev.flagged = ev.flagged || r.flagged;
      num += d.weight * r.sse;
      den += d.weight * static_cast<double>(r.n);
    }
    ev.total = std::sqrt(num / den);
    if (!std::isfinite(ev.total)) throw SimulationError(0.0, "non-finite objective");
  } catch (const Error&) {
    ev.failed = true;
    ev.total = pb.portfolio.penalty;
    ev.per_dataset.assign(pb.datasets.size(), pb.portfolio.penalty);
  }
  return ev;
}

enum class OptimizerId { De = 0, Pso = 1, Cmaes = 2 };
inline constexpr int kOptimizerCount = 3;

inline std::string_view to_string(OptimizerId id) {
  switch (id) {
    case OptimizerId::De: return "de";
    case OptimizerId::Pso: return "pso";
    case OptimizerId::Cmaes: return "cmaes";
  }
  return "";
}

struct SwitchOptions {
  int window = 5;
  double delta = 1e-3;
};

/// Decides the optimizer for the next generation. `stint` holds best-so-far
/// values since the incumbent was activated (entry 0 = value at activation,
/// then one entry per completed generation).
inline int switch_strategy(const std::vector<double>& stint, int incumbent, int n_optimizers,
                           const SwitchOptions& o = {}) {
  if (stint.size() < 2) throw InputError("switching needs at least one completed generation");
  if (static_cast<int>(stint.size()) <= o.window) return incumbent;
  const double before = stint[stint.size() - 1 - static_cast<std::size_t>(o.window)];
  const double now = stint.back();
  const double rel = before != 0.0 ? (before - now) / std::abs(before) : 0.0;
  if (rel < o.delta) return (incumbent + 1) % n_optimizers;
  return incumbent;
}

struct CalibrationResult {
  ParameterSet best_parameters;
  std::vector<double> best_values;  // free parameters in declaration order
  double best_rmse = 0.0;
  std::vector<double> dataset_rmse;
  int evaluation_count = 0;
  std::vector<std::pair<int, double>> convergence_history;  // (evaluation index, best so far)
  std::vector<int> generation_optimizer;
  bool stagnated = false;
};

namespace detail {

struct Member {
  std::vector<double> u;
  double f = std::numeric_limits<double>::infinity();
};

class CmaState {
public:
  void reset(const std::vector<Member>& archive, int lambda) {
    const int D = static_cast<int>(archive[0].u.size());
    D_ = D;
    lambda_ = lambda;
    mu_ = lambda / 2;
    w_.resize(mu_);
    for (int i = 0; i < mu_; ++i) w_[i] = std::log(mu_ + 0.5) - std::log(i + 1.0);
    const double sw = std::accumulate(w_.begin(), w_.end(), 0.0);
    for (double& v : w_) v /= sw;
    double s2 = 0.0;
    for (double v : w_) s2 += v * v;
    mueff_ = 1.0 / s2;
    cs_ = (mueff_ + 2.0) / (D + mueff_ + 5.0);
    ds_ = 1.0 + 2.0 * std::max(0.0, std::sqrt((mueff_ - 1.0) / (D + 1.0)) - 1.0) + cs_;
    cc_ = (4.0 + mueff_ / D) / (D + 4.0 + 2.0 * mueff_ / D);
    c1_ = 2.0 / ((D + 1.3) * (D + 1.3) + mueff_);
    cmu_ = std::min(1.0 - c1_, 2.0 * (mueff_ - 2.0 + 1.0 / mueff_) / ((D + 2.0) * (D + 2.0) + mueff_));
    chin_ = std::sqrt(static_cast<double>(D)) * (1.0 - 1.0 / (4.0 * D) + 1.0 / (21.0 * D * D));
    // Start at the archive's best member with the elite members' covariance.
    std::vector<int> idx(archive.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return archive[a].f < archive[b].f; });
    m_ = Eigen::VectorXd::Map(archive[idx[0]].u.data(), D);
    const int top = std::min<int>(mu_, static_cast<int>(archive.size()));
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(D);
    for (int i = 0; i < top; ++i) mean += Eigen::VectorXd::Map(archive[idx[i]].u.data(), D);
    mean /= top;
    C_ = 1e-10 * Eigen::MatrixXd::Identity(D, D);
    for (int i = 0; i < top; ++i) {
      const Eigen::VectorXd y = Eigen::VectorXd::Map(archive[idx[i]].u.data(), D) - mean;
      C_ += y * y.transpose() / top;
    }
    sigma_ = 1.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C_);
    B_ = es.eigenvectors();
    Dg_ = es.eigenvalues().cwiseMax(1e-20).cwiseSqrt();
    ps_ = Eigen::VectorXd::Zero(D);
    pc_ = Eigen::VectorXd::Zero(D);
    gen_ = 0;
  }

  std::vector<std::vector<double>> sample(std::mt19937_64& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<std::vector<double>> out(lambda_, std::vector<double>(D_));
    for (int k = 0; k < lambda_; ++k) {
      Eigen::VectorXd z(D_);
      for (int d = 0; d < D_; ++d) z[d] = n01(rng);
      const Eigen::VectorXd x = m_ + sigma_ * (B_ * Dg_.asDiagonal() * z);
      for (int d = 0; d < D_; ++d) out[k][d] = std::clamp(x[d], 0.0, 1.0);
    }
    return out;
  }

  void update(const std::vector<std::vector<double>>& xs, const std::vector<double>& fs) {
    std::vector<int> idx(xs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return fs[a] < fs[b]; });
    const int mu = std::min<int>(mu_, static_cast<int>(xs.size()));
    const Eigen::VectorXd m_old = m_;
    Eigen::VectorXd m_new = Eigen::VectorXd::Zero(D_);
    double wsum = 0.0;
    for (int i = 0; i < mu; ++i) {
      m_new += w_[i] * Eigen::VectorXd::Map(xs[idx[i]].data(), D_);
      wsum += w_[i];
    }
    m_new /= wsum;
    const Eigen::VectorXd yw = (m_new - m_old) / sigma_;
    const Eigen::MatrixXd invsqrt = B_ * Dg_.cwiseInverse().asDiagonal() * B_.transpose();
    ps_ = (1.0 - cs_) * ps_ + std::sqrt(cs_ * (2.0 - cs_) * mueff_) * (invsqrt * yw);
    ++gen_;
    const double psn = ps_.norm();
    const bool hs = psn / std::sqrt(1.0 - std::pow(1.0 - cs_, 2.0 * gen_)) < (1.4 + 2.0 / (D_ + 1.0)) * chin_;
    pc_ = (1.0 - cc_) * pc_ + (hs ? std::sqrt(cc_ * (2.0 - cc_) * mueff_) : 0.0) * yw;
    Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(D_, D_);
    for (int i = 0; i < mu; ++i) {
      const Eigen::VectorXd y = (Eigen::VectorXd::Map(xs[idx[i]].data(), D_) - m_old) / sigma_;
      rank_mu += (w_[i] / wsum) * y * y.transpose();
    }
    C_ = (1.0 - c1_ - cmu_) * C_ + c1_ * (pc_ * pc_.transpose() + (hs ? 0.0 : cc_ * (2.0 - cc_)) * C_) +
         cmu_ * rank_mu;
    C_ = 0.5 * (C_ + C_.transpose());
    sigma_ *= std::exp((cs_ / ds_) * (psn / chin_ - 1.0));
    sigma_ = std::clamp(sigma_, 1e-12, 1.0);
    m_ = m_new;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C_);
    B_ = es.eigenvectors();
    Dg_ = es.eigenvalues().cwiseMax(1e-20).cwiseSqrt();
  }

private:
  int D_ = 0, lambda_ = 0, mu_ = 0, gen_ = 0;
  std::vector<double> w_;
  double mueff_ = 0, cs_ = 0, ds_ = 0, cc_ = 0, c1_ = 0, cmu_ = 0, chin_ = 0, sigma_ = 0.1;
  Eigen::VectorXd m_, Dg_, ps_, pc_;
  Eigen::MatrixXd C_, B_;
};

}  // namespace detail

/// Builds a dataset from a profile log and a measured trace. The profile is
/// cut to the measured length (measurements end at the cutoff).
inline Dataset load_dataset(const std::string& name, const std::string& profile_path, const std::string& measured_path,
                            int n_series, bool measured_is_cell) {
  Dataset d;
  d.name = name;
  ParseOptions po;
  po.nominal_rate = 0.0;
  po.sensor_range = std::numeric_limits<double>::infinity();
  d.profile = parse_log(profile_path, po);
  d.measured = read_trace_csv(measured_path, n_series, measured_is_cell);
  if (d.measured.size() == 0) throw InputError("measured trace '" + measured_path + "' is empty", "empty_input");
  if (d.measured.size() > d.profile.size())
    throw InputError("measured trace '" + measured_path + "' is longer than its profile", "trace_mismatch");
  d.profile.samples.resize(d.measured.size());
  return d;
}

/// Reads a calibration problem document. Relative paths resolve against the
/// document's directory.
///
///   {"parameters": "truth.json" | {...}, "fixed": {...}, "budget": 2000, "seed": 1,
///    "population": 32, "mesh": [4, 3, 4, 6],
///    "datasets": [{"name", "profile", "measured", "voltage": "pack"|"cell", "weight", "initial_soc"}],
///    "free": [{"name", "lower", "upper", "log"}]}
inline CalibrationProblem problem_from_json(const nlohmann::json& j, const std::string& base_dir = "") {
  namespace fs = std::filesystem;
  auto resolve = [&](const std::string& s) {
    fs::path p(s);
    if (p.is_relative() && !base_dir.empty()) p = fs::path(base_dir) / p;
    return p.lexically_normal().string();
  };
  try {
    CalibrationProblem pb;
    if (j.contains("parameters")) {
      const auto& pj = j.at("parameters");
      pb.fixed = pj.is_string() ? load_parameters(resolve(pj.get<std::string>())) : parameters_from_json(pj);
    }
    if (j.contains("fixed")) update_from_json(pb.fixed, j.at("fixed"));
    pb.budget = j.value("budget", pb.budget);
    pb.seed = j.value("seed", pb.seed);
    pb.portfolio.population = j.value("population", pb.portfolio.population);
    pb.portfolio.window = j.value("switch_window", pb.portfolio.window);
    pb.portfolio.switch_delta = j.value("switch_delta", pb.portfolio.switch_delta);
    if (j.contains("mesh")) {
      const auto m = j.at("mesh").get<std::vector<int>>();
      if (m.size() != 4) throw InputError("mesh must list [n_neg, n_sep, n_pos, n_r]", "invalid_problem");
      pb.mesh = {m[0], m[1], m[2], m[3]};
    }
    for (const auto& dj : j.at("datasets")) {
      const std::string voltage = dj.value("voltage", "pack");
      if (voltage != "pack" && voltage != "cell")
        throw InputError("dataset voltage must be 'pack' or 'cell'", "invalid_problem");
      Dataset d = load_dataset(dj.value("name", "dataset" + std::to_string(pb.datasets.size())),
                               resolve(dj.at("profile").get<std::string>()),
                               resolve(dj.at("measured").get<std::string>()), pb.fixed.n_series, voltage == "cell");
      d.weight = dj.value("weight", 1.0);
      d.initial_soc = dj.value("initial_soc", 1.0);
      pb.datasets.push_back(std::move(d));
    }
    for (const auto& fj : j.at("free")) {
      FreeParameter f;
      f.name = fj.at("name").get<std::string>();
      f.lower = fj.at("lower").get<double>();
      f.upper = fj.at("upper").get<double>();
      f.log_scale = fj.value("log", default_log_scale(f.name));
      pb.free.push_back(f);
    }
    return pb;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed calibration problem: ") + e.what(), "invalid_problem");
  }
}

inline CalibrationProblem load_problem(const std::string& path) {
  const auto j = load_json(path);
  return problem_from_json(j, std::filesystem::absolute(path).parent_path().string());
}

/// Runs the switching portfolio until the budget is spent or progress
/// stagnates. Results depend only on the problem and seed, not on `jobs`.
inline CalibrationResult calibrate(const CalibrationProblem& pb) {
  pb.validate();
  const int D = static_cast<int>(pb.free.size());
  const int P = pb.portfolio.population;
  std::mt19937_64 rng(pb.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  CalibrationResult res;
  double best_f = std::numeric_limits<double>::infinity();
  std::vector<double> best_u;
  std::vector<double> best_ds;
  int evals = 0;
  bool any_success = false;

  auto values_of = [&](const std::vector<double>& u) {
    std::vector<double> v(D);
    for (int i = 0; i < D; ++i) v[i] = from_unit(pb.free[i], u[i]);
    return v;
  };

  // Evaluates candidates (possibly in parallel) and folds them in index order.
  auto run_batch = [&](const std::vector<std::vector<double>>& cand) {
    const int n = static_cast<int>(std::min<std::size_t>(cand.size(), static_cast<std::size_t>(pb.budget - evals)));
    std::vector<Evaluation> out(n);
    const int workers = std::max(1, std::min(pb.jobs, n));
    if (workers == 1) {
      for (int i = 0; i < n; ++i) out[i] = evaluate_parameters(pb, apply_free(pb, values_of(cand[i])));
    } else {
      std::atomic<int> next{0};
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
          for (int i = next++; i < n; i = next++) out[i] = evaluate_parameters(pb, apply_free(pb, values_of(cand[i])));
        });
      for (auto& t : pool) t.join();
    }
    bool gen_success = false;
    for (int i = 0; i < n; ++i) {
      ++evals;
      gen_success = gen_success || !out[i].failed;
      if (out[i].total < best_f) {
        best_f = out[i].total;
        best_u = cand[i];
        best_ds = out[i].per_dataset;
      }
      res.convergence_history.emplace_back(evals, best_f);
    }
    if (n > 0 && !gen_success && !any_success)
      throw CalibrationError("every candidate of a generation failed to simulate");
    any_success = any_success || gen_success;
    return out;
  };

  std::vector<detail::Member> archive(P);
  {
    std::vector<std::vector<double>> init(P, std::vector<double>(D));
    for (auto& u : init)
      for (double& v : u) v = U(rng);
    const auto ev = run_batch(init);
    for (std::size_t i = 0; i < ev.size(); ++i) archive[i] = {init[i], ev[i].total};
    for (std::size_t i = ev.size(); i < init.size(); ++i) archive[i] = {init[i], std::numeric_limits<double>::infinity()};
  }

  int active = static_cast<int>(OptimizerId::De);
  std::vector<double> stint{best_f};
  std::vector<double> gen_best{best_f};
  std::vector<std::vector<double>> pso_x, pso_v;
  detail::CmaState cma;
  bool fresh_activation = true;
  const SwitchOptions sw{pb.portfolio.window, pb.portfolio.switch_delta};

  auto best_index = [&] {
    int b = 0;
    for (int i = 1; i < P; ++i)
      if (archive[i].f < archive[b].f) b = i;
    return b;
  };

  while (evals < pb.budget) {
    std::vector<std::vector<double>> trials(P, std::vector<double>(D));
    const auto id = static_cast<OptimizerId>(active);
    res.generation_optimizer.push_back(active);
    if (id == OptimizerId::De) {
      // current-to-best/1 with binomial crossover
      const int b = best_index();
      std::uniform_int_distribution<int> pick(0, P - 1), dim(0, D - 1);
      for (int i = 0; i < P; ++i) {
        int r1, r2;
        do r1 = pick(rng); while (r1 == i);
        do r2 = pick(rng); while (r2 == i || r2 == r1);
        const int jr = dim(rng);
        for (int d = 0; d < D; ++d) {
          const double x = archive[i].u[d];
          double v = x + 0.7 * (archive[b].u[d] - x) + 0.7 * (archive[r1].u[d] - archive[r2].u[d]);
          if (v < 0.0) v = 0.5 * x;
          if (v > 1.0) v = 0.5 * (x + 1.0);
          trials[i][d] = (U(rng) < 0.9 || d == jr) ? v : x;
        }
      }
    } else if (id == OptimizerId::Pso) {
      if (fresh_activation) {
        pso_x.assign(P, {});
        pso_v.assign(P, std::vector<double>(D));
        for (int i = 0; i < P; ++i) {
          pso_x[i] = archive[i].u;
          for (double& v : pso_v[i]) v = 0.1 * (U(rng) - 0.5);
        }
      }
      const int b = best_index();
      for (int i = 0; i < P; ++i)
        for (int d = 0; d < D; ++d) {
          double& v = pso_v[i][d];
          v = 0.7298 * v + 1.49618 * U(rng) * (archive[i].u[d] - pso_x[i][d]) +
              1.49618 * U(rng) * (archive[b].u[d] - pso_x[i][d]);
          double x = pso_x[i][d] + v;
          if (x < 0.0 || x > 1.0) {
            x = std::clamp(x, 0.0, 1.0);
            v = 0.0;
          }
          pso_x[i][d] = x;
          trials[i][d] = x;
        }
    } else {
      if (fresh_activation) cma.reset(archive, P);
      trials = cma.sample(rng);
    }
    fresh_activation = false;

    const auto ev = run_batch(trials);
    const int n = static_cast<int>(ev.size());
    if (id == OptimizerId::Cmaes) {
      std::vector<double> fs(n);
      for (int i = 0; i < n; ++i) fs[i] = ev[i].total;
      std::vector<std::vector<double>> xs(trials.begin(), trials.begin() + n);
      if (n >= 2) cma.update(xs, fs);
      // Better samples replace the worst archive members.
      std::vector<int> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return fs[a] < fs[b]; });
      for (int k : order) {
        int worst = 0;
        for (int i = 1; i < P; ++i)
          if (archive[i].f > archive[worst].f) worst = i;
        if (fs[k] < archive[worst].f) archive[worst] = {trials[k], fs[k]};
      }
    } else {
      for (int i = 0; i < n; ++i)
        if (ev[i].total <= archive[i].f) archive[i] = {trials[i], ev[i].total};
    }

    stint.push_back(best_f);
    gen_best.push_back(best_f);
    const int g = static_cast<int>(gen_best.size()) - 1;
    const int sg = pb.portfolio.stagnation_generations;
    if (g >= sg) {
      const double before = gen_best[g - sg];
      if (before - best_f <= pb.portfolio.stagnation_delta * std::abs(before)) {
        res.stagnated = true;
        break;
      }
    }
    const int next = switch_strategy(stint, active, kOptimizerCount, sw);
    if (next != active) {
      active = next;
      stint.assign(1, best_f);
      fresh_activation = true;
    }
  }

  res.best_values = values_of(best_u);
  res.best_parameters = apply_free(pb, res.best_values);
  res.best_rmse = best_f;
  res.dataset_rmse = best_ds;
  res.evaluation_count = evals;
  return res;
}

inline nlohmann::json to_json(const CalibrationResult& r, const CalibrationProblem& pb) {
  nlohmann::json free = nlohmann::json::object();
  for (std::size_t i = 0; i < pb.free.size(); ++i) free[pb.free[i].name] = r.best_values[i];
  nlohmann::json ds = nlohmann::json::object();
  for (std::size_t i = 0; i < pb.datasets.size() && i < r.dataset_rmse.size(); ++i)
    ds[pb.datasets[i].name] = r.dataset_rmse[i];
  std::vector<std::string> opt;
  for (int g : r.generation_optimizer) opt.emplace_back(to_string(static_cast<OptimizerId>(g)));
  return {{"best_rmse_v", r.best_rmse},
          {"evaluation_count", r.evaluation_count},
          {"free_parameters", free},
          {"dataset_rmse_v", ds},
          {"stagnated", r.stagnated},
          {"generation_optimizer", opt},
          {"best_parameters", to_json(r.best_parameters)}};
}

inline void write_convergence_csv(std::ostream& out, const CalibrationResult& r) {
  out << "evaluation,best_rmse_v\n";
  char buf[64];
  for (const auto& [i, f] : r.convergence_history) {
    std::snprintf(buf, sizeof buf, "%.17g", f);
    out << i << ',' << buf << '\n';
  }
}

}  // namespace qbat
