// qbat: calibrate, extract, replay, assess and report from config files.
//
// Exit codes: 0 success, 1 runtime failure, 2 input or config error. Errors
// go to stderr as one JSON line with a stable "code" field.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qbat/qbat.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qbat;

namespace {

struct CommonFlags {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  long long seed = -1;
  int jobs = 0;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("-c,--config", f.config, "config file");
  app->add_option("-s,--set", f.overrides, "override a config key (section.key=value)");
  app->add_option("-o,--out", f.out, "output directory");
  app->add_option("--seed", f.seed, "random seed");
  app->add_option("-j,--jobs", f.jobs, "worker threads");
}

Config load_config(const CommonFlags& f) {
  Config c = f.config.empty() ? Config{} : Config::load(f.config);
  for (const auto& o : f.overrides) c.set_override(o);
  return c;
}

/// Rejects keys of the command's own sections that were never read (typos).
/// Sections of other commands may share the file.
void reject_unused(const Config& c, std::initializer_list<std::string_view> sections) {
  std::string all;
  for (const auto& k : c.unused()) {
    const auto sec = std::string_view(k).substr(0, k.find('.'));
    if (k.find('.') == std::string::npos || std::find(sections.begin(), sections.end(), sec) != sections.end())
      all += (all.empty() ? "" : ", ") + k;
  }
  if (all.empty()) return;
  throw InputError("unknown config keys: " + all, "unknown_key");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path.string() + "'", "unwritable_path");
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

fs::path prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InputError("cannot create output directory '" + dir + "'", "unwritable_path");
  return fs::path(dir);
}

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw InputError("file not found: '" + path + "'", "missing_path");
}

std::string out_dir(const Config& c, const CommonFlags& f, const std::string& key, const std::string& fallback) {
  const auto configured = c.path_or(key, fallback);
  return f.out.empty() ? configured : f.out;
}

int jobs_of(const Config& c, const CommonFlags& f, const std::string& key) {
  const int configured = c.get_or<int>(key, 1);
  const int j = f.jobs > 0 ? f.jobs : configured;
  if (j < 1) throw InputError("jobs must be at least 1", "invalid_config");
  return j;
}

MeshSpec mesh_of(const Config& c, const std::string& key, MeshSpec fallback) {
  if (!c.has(key)) return fallback;
  const auto m = c.get<std::vector<int>>(key);
  if (m.size() != 4 || *std::min_element(m.begin(), m.end()) < 1)
    throw InputError(key + " must list four positive counts [n_neg, n_sep, n_pos, n_r]", "invalid_config");
  return {m[0], m[1], m[2], m[3]};
}

/// Model parameters: optional JSON file under `key`, then [parameters] and
/// [degradation] keys from the config.
ParameterSet parameters_of(const Config& c, const std::string& key) {
  ParameterSet p;
  if (c.has(key)) {
    const auto path = c.path(key);
    require_file(path);
    p = load_parameters(path);
  }
  json patch = json::object();
  for (const auto& k : c.keys_under("parameters")) {
    if (k == "n_series") patch["n_series"] = c.get<int>("parameters.n_series");
    else patch[k] = c.get<double>("parameters." + k);
  }
  static const std::set<std::string> toggles = {"sei_nominal", "sei_crack", "plating", "cracking", "lam",
                                                "mechanics_positive"};
  json deg = json::object();
  for (const auto& k : c.keys_under("degradation")) {
    if (k == "all_off") {
      if (c.get<bool>("degradation.all_off")) {
        for (const auto& t : toggles) deg["toggles"][t] = false;
      }
    } else if (toggles.count(k)) {
      deg["toggles"][k] = c.get<bool>("degradation." + k);
    } else {
      deg[k] = c.get<double>("degradation." + k);
    }
  }
  if (!deg.empty()) patch["degradation"] = deg;
  update_from_json(p, patch);
  validate(p);
  return p;
}

SolverOptions solver_of(const Config& c) {
  SolverOptions s;
  s.v_min = c.get_or("solver.v_min", s.v_min);
  s.v_max = c.get_or("solver.v_max", s.v_max);
  s.tol_newton = c.get_or("solver.tol_newton", s.tol_newton);
  s.max_newton_iter = c.get_or("solver.max_newton_iter", s.max_newton_iter);
  s.dt_floor = c.get_or("solver.dt_floor", s.dt_floor);
  if (!(s.v_min < s.v_max)) throw InputError("solver.v_min must be below solver.v_max", "invalid_config");
  return s;
}

std::string trace_csv(const VoltageTrace& tr) {
  std::ostringstream s;
  write_trace_csv(s, tr);
  return s.str();
}

std::string profile_csv(const CurrentProfile& p) {
  std::ostringstream s;
  write_profile_csv(s, p);
  return s.str();
}

// ---------------------------------------------------------------- calibrate

int cmd_calibrate(const CommonFlags& f) {
  Config c = load_config(f);
  const auto problem_path = c.path("calibration.problem");
  require_file(problem_path);
  CalibrationProblem pb = load_problem(problem_path);
  pb.budget = c.get_or("calibration.budget", pb.budget);
  pb.seed = c.get_or<std::uint64_t>("calibration.seed", pb.seed);
  if (f.seed >= 0) pb.seed = static_cast<std::uint64_t>(f.seed);
  pb.portfolio.population = c.get_or("calibration.population", pb.portfolio.population);
  pb.mesh = mesh_of(c, "calibration.mesh", pb.mesh);
  pb.jobs = jobs_of(c, f, "calibration.jobs");
  const auto dir = prepare_out(out_dir(c, f, "calibration.output_dir", "calibration_out"));
  reject_unused(c, {"calibration"});

  const auto res = calibrate(pb);
  write_json(dir / "result.json", to_json(res, pb));
  write_json(dir / "best_parameters.json", to_json(res.best_parameters));
  std::ostringstream conv;
  write_convergence_csv(conv, res);
  write_text(dir / "convergence.csv", conv.str());
  std::cout << "best rmse " << res.best_rmse << " V after " << res.evaluation_count << " evaluations\n";
  return 0;
}

// ---------------------------------------------------------------------- rpt

int cmd_rpt(const CommonFlags& f) {
  Config c = load_config(f);
  const ParameterSet p = parameters_of(c, "rpt.parameters");
  const MeshSpec mesh = mesh_of(c, "rpt.mesh", MeshSpec{4, 3, 4, 6});
  const auto kinds = c.get_or<std::vector<std::string>>("rpt.kinds", {"cc_2c", "pulse"});
  RptOptions ro;
  ro.pulses = c.get_or("rpt.pulses", ro.pulses);
  SimulationOptions so;
  so.solver = solver_of(c);
  const auto dir = prepare_out(out_dir(c, f, "rpt.output_dir", "rpt_out"));
  reject_unused(c, {"rpt", "parameters", "degradation", "solver"});
  for (const auto& k : kinds) {
    const auto prof = generate_rpt(parse_rpt(k), p.one_c_current(), ro);
    write_text(dir / ("rpt_" + k + "_profile.csv"), profile_csv(prof));
    write_text(dir / ("rpt_" + k + "_measured.csv"), trace_csv(simulate(p, mesh, prof, so)));
  }
  return 0;
}

// ---------------------------------------------------------------- synth-log

int cmd_synth_log(const CommonFlags& f) {
  Config c = load_config(f);
  SyntheticFlightOptions o;
  o.seed = c.get_or<std::uint64_t>("synth.seed", o.seed);
  if (f.seed >= 0) o.seed = static_cast<std::uint64_t>(f.seed);
  o.rounds = c.get_or("synth.rounds", o.rounds);
  o.hover_s = c.get_or("synth.hover_s", o.hover_s);
  o.vertical_s = c.get_or("synth.vertical_s", o.vertical_s);
  o.horizontal_s = c.get_or("synth.horizontal_s", o.horizontal_s);
  const auto dir = prepare_out(out_dir(c, f, "synth.output_dir", "."));
  reject_unused(c, {"synth"});
  const auto log_path = (dir / "synthetic_flight_log.csv").string();
  write_log_csv(log_path, synthetic_flight_log(o));
  write_json(dir / "synthetic_flight_labels.json", labels_to_json(labels_from_log(log_path)));
  return 0;
}

// ------------------------------------------------------------------ extract

ThresholdConfig threshold_of(const Config& c) {
  ThresholdConfig t;
  t.window_s = c.get_or("threshold.window_s", t.window_s);
  t.overlap = c.get_or("threshold.overlap", t.overlap);
  t.min_duration_s = c.get_or("threshold.min_duration_s", t.min_duration_s);
  for (const auto& k : c.keys_under("threshold")) {
    if (k == "window_s" || k == "overlap" || k == "min_duration_s") continue;
    const auto v = c.get<std::vector<double>>("threshold." + k);
    if (v.size() != 4) throw InputError("band threshold." + k + " must be [mean_lo, mean_hi, std_lo, std_hi]", "invalid_config");
    t.bands.push_back({parse_motion(k), v[0], v[1], v[2], v[3]});
  }
  if (t.bands.empty()) throw InputError("threshold mode needs at least one band", "invalid_config");
  return t;
}

int cmd_extract(const CommonFlags& f) {
  Config c = load_config(f);
  const auto log_path = c.path("extract.log");
  require_file(log_path);
  ParseOptions po;
  po.nominal_rate = c.get_or("extract.sample_rate", po.nominal_rate);
  po.sensor_range = c.get_or("extract.sensor_range", po.sensor_range);
  const int window = c.get_or("extract.filter_window", 10);
  const double target = c.get_or("extract.target_duration_s", 240.0);
  const std::string stitch_name = c.get_or<std::string>("extract.stitch", "crossfade");
  const int fade = c.get_or("extract.crossfade_samples", 5);
  const double pack_v = c.get_or("extract.pack_voltage", ParameterSet{}.pack_nominal_voltage());
  const std::string mode = c.get_or<std::string>("extract.mode", "label_file");
  std::string labels_path;
  ThresholdConfig tcfg;
  if (mode == "label_file") {
    labels_path = c.path("extract.labels");
    require_file(labels_path);
  } else if (mode == "threshold") {
    tcfg = threshold_of(c);
  } else if (mode != "log_column") {
    throw InputError("extract.mode must be label_file, log_column or threshold", "invalid_config");
  }
  Stitch stitch;
  if (stitch_name == "crossfade") stitch = Stitch::Crossfade;
  else if (stitch_name == "repeat") stitch = Stitch::Repeat;
  else throw InputError("extract.stitch must be crossfade or repeat", "invalid_config");
  const auto dir = prepare_out(out_dir(c, f, "extract.output_dir", "extract_out"));
  reject_unused(c, {"extract", "threshold"});

  const CurrentProfile raw = parse_log(log_path, po);
  const CurrentProfile filtered = moving_average(raw, window);
  std::vector<SegmentLabel> segs;
  if (mode == "label_file") segs = segment_from_labels(filtered, read_labels(labels_path));
  else if (mode == "log_column") segs = segment_from_labels(filtered, labels_from_log(log_path, po));
  else segs = segment_threshold(filtered, tcfg);

  json seg_json = json::array();
  for (const auto& s : segs)
    seg_json.push_back({{"start_s", s.start / filtered.sample_rate},
                        {"end_s", s.end / filtered.sample_rate},
                        {"tag", std::string(to_string(s.tag))}});
  write_json(dir / "segments.json", seg_json);

  // The longest segment of each motion is the reconstruction source.
  json stats = json::object();
  for (MotionTag tag : {MotionTag::Hover, MotionTag::Vertical, MotionTag::Horizontal, MotionTag::Cc, MotionTag::Other}) {
    const SegmentLabel* best = nullptr;
    for (const auto& s : segs)
      if (s.tag == tag && (!best || s.end - s.start > best->end - best->start)) best = &s;
    if (!best) continue;
    // Skip the trailing filter's warm-up when the segment follows other data.
    SegmentLabel src = *best;
    if (src.start > 0) src.start = std::min(src.start + static_cast<std::size_t>(window) - 1, src.end - 2);
    CurrentProfile prof = periodic_reconstruct(filtered, src, target, stitch, fade);
    // Equal flight time for every motion and the constant-current baselines.
    const auto keep = static_cast<std::size_t>(std::llround(target * prof.sample_rate));
    if (prof.size() > keep) prof.samples.resize(keep);
    prof.tag = tag;
    prof.source = log_path;
    const std::string name = "profile_" + std::string(to_string(tag));
    write_text(dir / (name + ".csv"), profile_csv(prof));
    write_json(dir / (name + ".json"), profile_sidecar(prof, pack_v));
    stats[std::string(to_string(tag))] = to_json(profile_stats(prof, pack_v));
  }
  write_json(dir / "stats.json", stats);
  std::cout << segs.size() << " segments, " << stats.size() << " motion profiles\n";
  return 0;
}

// ----------------------------------------------------------- replay/assess

struct ReplayJob {
  std::string tag;
  CurrentProfile profile;
};

CurrentProfile load_profile(const std::string& path, MotionTag tag) {
  require_file(path);
  ParseOptions po;
  po.nominal_rate = 0.0;
  CurrentProfile p = parse_log(path, po);
  p.tag = tag;
  return p;
}

/// Motion tag from a sidecar next to the profile, else from the file name.
MotionTag motion_of(const std::string& path) {
  fs::path side = fs::path(path).replace_extension(".json");
  if (fs::is_regular_file(side)) {
    const auto j = load_json(side.string());
    if (j.contains("tag") && j.at("tag").is_string()) return parse_motion(j.at("tag").get<std::string>());
  }
  const std::string stem = fs::path(path).stem().string();
  for (MotionTag t : {MotionTag::Hover, MotionTag::Vertical, MotionTag::Horizontal, MotionTag::Cc})
    if (stem.find(to_string(t)) != std::string::npos) return t;
  return MotionTag::Other;
}

std::string tag_of(const std::string& path, MotionTag m) {
  return m == MotionTag::Other ? fs::path(path).stem().string() : std::string(to_string(m));
}

ReplayOptions replay_options_of(const Config& c, const std::string& sec) {
  ReplayOptions o;
  o.mesh = mesh_of(c, sec + ".mesh", o.mesh);
  o.solver = solver_of(c);
  o.repetitions = c.get_or(sec + ".repetitions", o.repetitions);
  o.recharge = parse_recharge(c.get_or<std::string>(sec + ".recharge", "cccv"));
  o.rest_s = c.get_or(sec + ".rest_s", o.rest_s);
  o.capacity_check = c.get_or(sec + ".capacity_check", o.capacity_check);
  if (o.repetitions < 1) throw InputError(sec + ".repetitions must be at least 1", "invalid_config");
  return o;
}

std::vector<HealthReport> run_replays(const ParameterSet& p, const std::vector<ReplayJob>& jobs, const ReplayOptions& o,
                                      int workers) {
  std::vector<HealthReport> out(jobs.size());
  std::vector<std::exception_ptr> err(jobs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        out[i] = replay(p, jobs[i].profile, jobs[i].tag, o).report;
      } catch (...) {
        err[i] = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < n; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : err)
    if (e) std::rethrow_exception(e);
  return out;
}

void write_comparison(const fs::path& dir, const std::vector<HealthReport>& reports) {
  const BaselineFit fit = fit_baselines(reports);
  const auto rows = motion_report(reports, fit);
  std::ostringstream csv;
  write_report_csv(csv, rows);
  write_text(dir / "comparison.csv", csv.str());
  write_json(dir / "comparison.json", to_json(rows));
  write_json(dir / "baseline_fit.json", to_json(fit));
  for (Metric m : kMetrics) {
    std::ostringstream plot;
    write_plot_csv(plot, reports, fit, m);
    write_text(dir / ("plot_" + std::string(to_string(m)) + ".csv"), plot.str());
  }
}

int cmd_replay(const CommonFlags& f) {
  Config c = load_config(f);
  const ParameterSet p = parameters_of(c, "replay.parameters");
  const auto path = c.path("replay.profile");
  const MotionTag m = c.has("replay.motion") ? parse_motion(c.get<std::string>("replay.motion")) : motion_of(path);
  const std::string tag = c.get_or("replay.tag", tag_of(path, m));
  ReplayOptions o = replay_options_of(c, "replay");
  o.keep_traces = true;
  const auto dir = prepare_out(out_dir(c, f, "replay.output_dir", "replay_out"));
  reject_unused(c, {"replay", "parameters", "degradation", "solver"});
  const auto prof = load_profile(path, m);
  const auto res = replay(p, prof, tag, o);
  write_json(dir / ("report_" + tag + ".json"), to_json(res.report));
  write_text(dir / ("trace_" + tag + "_first.csv"), trace_csv(res.first_trace));
  write_text(dir / ("trace_" + tag + "_last.csv"), trace_csv(res.last_trace));
  return 0;
}

int cmd_assess(const CommonFlags& f) {
  Config c = load_config(f);
  const ParameterSet p = parameters_of(c, "assess.parameters");
  const auto baselines = c.get_or<std::vector<double>>("assess.baselines", {16.0, 18.0, 20.0, 22.0});
  const std::string unit = c.get_or<std::string>("assess.baseline_unit", "A");
  if (unit != "A" && unit != "C") throw InputError("assess.baseline_unit must be A or C", "invalid_config");
  const double rate = c.get_or("assess.baseline_rate", 10.0);
  const auto motion_paths = c.has("assess.motions") ? c.paths("assess.motions") : std::vector<std::string>{};
  const ReplayOptions o = replay_options_of(c, "assess");
  const int workers = jobs_of(c, f, "assess.jobs");
  std::vector<ReplayJob> jobs;
  for (const auto& mp : motion_paths) {
    const MotionTag m = motion_of(mp);
    jobs.push_back({tag_of(mp, m), load_profile(mp, m)});
  }
  const double default_duration = jobs.empty() ? 240.0 : jobs.front().profile.duration();
  const double duration = c.get_or("assess.baseline_duration_s", default_duration);
  const auto dir = prepare_out(out_dir(c, f, "assess.output_dir", "assess_out"));
  reject_unused(c, {"assess", "parameters", "degradation", "solver"});

  std::vector<ReplayJob> all;
  for (double b : baselines) {
    const double amps = unit == "A" ? b : b * p.one_c_current();
    std::ostringstream tag;
    tag << "cc_" << b << unit;
    all.push_back({tag.str(), constant_current(amps, duration, rate)});
  }
  all.insert(all.end(), jobs.begin(), jobs.end());
  const auto reports = run_replays(p, all, o, workers);
  const auto rdir = prepare_out((dir / "reports").string());
  for (const auto& r : reports) write_json(rdir / ("report_" + r.tag + ".json"), to_json(r));
  write_comparison(dir, reports);
  std::cout << reports.size() << " replays assessed\n";
  return 0;
}

int cmd_report(const CommonFlags& f) {
  Config c = load_config(f);
  std::vector<std::string> paths;
  if (c.has("report.reports")) paths = c.paths("report.reports");
  if (c.has("report.input_dir")) {
    const auto in = c.path("report.input_dir");
    if (!fs::is_directory(in)) throw InputError("report directory not found: '" + in + "'", "missing_path");
    std::vector<std::string> found;
    for (const auto& e : fs::directory_iterator(in))
      if (e.path().extension() == ".json") found.push_back(e.path().string());
    std::sort(found.begin(), found.end());
    paths.insert(paths.end(), found.begin(), found.end());
  }
  const auto dir = prepare_out(out_dir(c, f, "report.output_dir", "report_out"));
  reject_unused(c, {"report"});
  if (paths.empty()) throw InputError("no health reports given", "empty_input");
  std::vector<HealthReport> reports;
  for (const auto& p : paths) {
    require_file(p);
    reports.push_back(health_report_from_json(load_json(p)));
  }
  write_comparison(dir, reports);
  return 0;
}

void print_error(const std::string& code, const std::string& message) {
  std::cerr << json{{"code", code}, {"message", message}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quadrotor battery calibration and degradation assessment"};
  app.require_subcommand(1);
  struct Sub {
    const char* name;
    const char* help;
    int (*run)(const CommonFlags&);
  };
  const Sub subs[] = {
      {"calibrate", "fit model parameters to reference-test data", cmd_calibrate},
      {"extract", "turn a flight log into motion-specific current profiles", cmd_extract},
      {"replay", "replay one profile with ageing and write its health report", cmd_replay},
      {"assess", "replay baselines and motions, fit baselines, compare", cmd_assess},
      {"report", "rebuild the comparison table from saved health reports", cmd_report},
      {"rpt", "write reference-test profiles and simulated measurements", cmd_rpt},
      {"synth-log", "write the synthetic flight log and its labels", cmd_synth_log},
  };
  CommonFlags flags;
  std::vector<std::pair<CLI::App*, int (*)(const CommonFlags&)>> cmds;
  for (const auto& s : subs) {
    auto* sc = app.add_subcommand(s.name, s.help);
    add_common(sc, flags);
    cmds.emplace_back(sc, s.run);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }
  try {
    for (const auto& [sc, run] : cmds)
      if (sc->parsed()) return run(flags);
  } catch (const InputError& e) {
    print_error(e.code(), e.what());
    return 2;
  } catch (const DomainError& e) {
    print_error(e.code(), e.what());
    return 2;
  } catch (const Error& e) {
    print_error(e.code(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal_error", e.what());
    return 1;
  }
  return 1;
}
