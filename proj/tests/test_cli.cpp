#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qbat/profiles.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / "qbat_test_cli" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

Outcome run(const fs::path& dir, const std::string& args) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string(QBAT_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.out = slurp(out);
  o.err = slurp(err);
  return o;
}

void write(const fs::path& p, const std::string& body) { std::ofstream(p) << body; }

std::string src(const std::string& rel) { return std::string(QBAT_SOURCE_DIR) + "/" + rel; }

json error_json(const Outcome& o) {
  const auto line = o.err.substr(0, o.err.find('\n'));
  return json::parse(line);
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    rows.push_back(f);
  }
  return rows;
}

std::string assess_config(const fs::path& dir, const std::string& extra) {
  qbat::write_profile_csv((dir / "profile_vertical.csv").string(), qbat::square_wave(30, 10, 3, 0.5, 60, 10));
  return "[assess]\n"
         "parameters = \"" + src("configs/default_parameters.json") + "\"\n"
         "baselines = [16, 22]\n"
         "baseline_duration_s = 60\n"
         "motions = [\"profile_vertical.csv\"]\n"
         "repetitions = 2\n"
         "mesh = [4, 3, 4, 6]\n"
         "output_dir = \"out\"\n" + extra;
}

}  // namespace

TEST_CASE("calibrate with a missing dataset names the path") {
  const auto d = scratch("missing");
  write(d / "problem.json", json{{"datasets", {{{"name", "x"}, {"profile", "nowhere_profile.csv"},
                                                {"measured", "nowhere_measured.csv"}}}},
                                 {"free", {{{"name", "D_n"}, {"lower", 1e-14}, {"upper", 1e-12}}}}}
                                .dump());
  write(d / "run.toml", "[calibration]\nproblem = \"problem.json\"\noutput_dir = \"out\"\n");
  const auto o = run(d, "calibrate -c " + (d / "run.toml").string());
  REQUIRE(o.code == 2);
  const auto e = error_json(o);
  REQUIRE(e.contains("code"));
  REQUIRE(e.at("message").get<std::string>().find("nowhere_profile.csv") != std::string::npos);
}

TEST_CASE("extract on an empty log fails with an input error") {
  const auto d = scratch("empty");
  write(d / "log.csv", "");
  write(d / "run.toml", "[extract]\nlog = \"log.csv\"\nmode = \"log_column\"\noutput_dir = \"out\"\n");
  const auto o = run(d, "extract -c " + (d / "run.toml").string());
  REQUIRE(o.code == 2);
  REQUIRE(error_json(o).at("code") == "empty_input");
}

TEST_CASE("usage and config errors exit 2 with a JSON diagnostic") {
  const auto d = scratch("usage");
  REQUIRE(run(d, "frobnicate").code == 2);
  REQUIRE(error_json(run(d, "calibrate --bogus")).at("code") == "usage");
  write(d / "run.toml", "[calibration]\nproblem = \"p.json\"\nbudgett = 5\n");
  write(d / "p.json", "{}");
  const auto o = run(d, "calibrate -c " + (d / "run.toml").string());
  REQUIRE(o.code == 2);
  write(d / "bad.toml", "[calibration\n");
  REQUIRE(run(d, "calibrate -c " + (d / "bad.toml").string()).code == 2);
  REQUIRE(run(d, "calibrate -c " + (d / "absent.toml").string()).code == 2);
}

TEST_CASE("synthetic calibration is reproducible from the command line") {
  const auto d = scratch("calibrate");
  const std::string base = "calibrate -c " + src("configs/calibrate_synthetic.toml") + " -s calibration.budget=64 --seed 7";
  const auto a = run(d, base + " -o " + (d / "a").string());
  REQUIRE(a.code == 0);
  const auto b = run(d, base + " -j 2 -o " + (d / "b").string());
  REQUIRE(b.code == 0);
  for (const char* f : {"result.json", "best_parameters.json", "convergence.csv"}) {
    REQUIRE(fs::exists(d / "a" / f));
    REQUIRE(slurp(d / "a" / f) == slurp(d / "b" / f));
  }
  const auto r = json::parse(slurp(d / "a" / "result.json"));
  REQUIRE(r.at("evaluation_count") == 64);
  REQUIRE(r.at("free_parameters").size() == 4);
  REQUIRE(read_csv(d / "a" / "convergence.csv").size() == 65);
}

TEST_CASE("label-file extraction writes one profile per motion") {
  const auto d = scratch("extract");
  const std::string args = "extract -c " + src("configs/default.toml");
  REQUIRE(run(d, args + " -o " + (d / "a").string()).code == 0);
  REQUIRE(run(d, args + " -o " + (d / "b").string()).code == 0);
  for (const char* m : {"hover", "vertical", "horizontal"}) {
    const auto csv = d / "a" / (std::string("profile_") + m + ".csv");
    REQUIRE(fs::exists(csv));
    REQUIRE(slurp(csv) == slurp(d / "b" / csv.filename()));
    const auto side = json::parse(slurp(d / "a" / (std::string("profile_") + m + ".json")));
    REQUIRE(side.at("tag") == m);
    REQUIRE(side.at("duration_s").get<double>() == Catch::Approx(240.0));
  }
  const auto segs = json::parse(slurp(d / "a" / "segments.json"));
  const auto labels = json::parse(slurp(src("fixtures/synthetic_flight_labels.json")));
  REQUIRE(segs.size() == labels.size());
}

TEST_CASE("threshold extraction finds every motion") {
  const auto d = scratch("threshold");
  const auto o = run(d, "extract -c " + src("configs/threshold.toml") + " -o " + (d / "out").string());
  REQUIRE(o.code == 0);
  for (const char* m : {"hover", "vertical", "horizontal"})
    REQUIRE(fs::exists(d / "out" / (std::string("profile_") + m + ".csv")));
}

TEST_CASE("assess with two baselines and one motion") {
  const auto d = scratch("assess");
  write(d / "run.toml", assess_config(d, ""));
  const auto o = run(d, "assess -c " + (d / "run.toml").string());
  REQUIRE(o.code == 0);
  const auto rows = read_csv(d / "out" / "comparison.csv");
  REQUIRE(rows.size() == 4);
  REQUIRE(rows[0] == std::vector<std::string>{"tag", "energy_wh", "lli_norm", "lam_norm", "sei_nom_norm",
                                              "sei_crack_norm", "plating_norm"});
  std::vector<std::string> tags;
  for (std::size_t k = 1; k < rows.size(); ++k) tags.push_back(rows[k][0]);
  std::sort(tags.begin(), tags.end());
  REQUIRE(tags == std::vector<std::string>{"cc_16A", "cc_22A", "vertical"});
  for (const char* f : {"comparison.json", "baseline_fit.json", "plot_lli.csv", "reports/report_vertical.json"})
    REQUIRE(fs::exists(d / "out" / f));
  const auto o2 = run(d, "report -s report.input_dir=" + (d / "out" / "reports").string() + " -o " +
                             (d / "rep").string());
  REQUIRE(o2.code == 0);
  REQUIRE(slurp(d / "rep" / "comparison.csv") == slurp(d / "out" / "comparison.csv"));
}

TEST_CASE("assess with ageing switched off flags every metric") {
  const auto d = scratch("assess_off");
  write(d / "run.toml", assess_config(d, "\n[degradation]\nall_off = true\n"));
  const auto o = run(d, "assess -c " + (d / "run.toml").string());
  REQUIRE(o.code == 0);
  const auto rows = read_csv(d / "out" / "comparison.csv");
  REQUIRE(rows.size() == 4);
  for (std::size_t k = 1; k < rows.size(); ++k) {
    REQUIRE(rows[k].size() == 7);
    for (std::size_t c = 2; c < 7; ++c) REQUIRE(rows[k][c].empty());
  }
  const auto j = json::parse(slurp(d / "out" / "comparison.json"));
  for (const auto& row : j) REQUIRE(row.at("lli_norm").is_null());
}

TEST_CASE("replay, rpt and synthetic log commands") {
  const auto d = scratch("misc");
  REQUIRE(run(d, "synth-log -o " + (d / "log").string()).code == 0);
  REQUIRE(slurp(d / "log" / "synthetic_flight_log.csv") == slurp(src("fixtures/synthetic_flight_log.csv")));
  REQUIRE(slurp(d / "log" / "synthetic_flight_labels.json") ==
          slurp(src("fixtures/synthetic_flight_labels.json")));

  qbat::write_profile_csv((d / "profile_hover.csv").string(), qbat::constant_current(16, 30, 10));
  write(d / "replay.toml", "[replay]\nprofile = \"profile_hover.csv\"\nrepetitions = 2\nmesh = [4, 3, 4, 6]\n"
                           "capacity_check = false\noutput_dir = \"rp\"\n");
  REQUIRE(run(d, "replay -c " + (d / "replay.toml").string()).code == 0);
  const auto rep = json::parse(slurp(d / "rp" / "report_hover.json"));
  REQUIRE(rep.at("cycles") == 2);

  write(d / "rpt.toml", "[rpt]\nkinds = [\"pulse\"]\npulses = 2\noutput_dir = \"rpt\"\n");
  REQUIRE(run(d, "rpt -c " + (d / "rpt.toml").string()).code == 0);
  REQUIRE(read_csv(d / "rpt" / "rpt_pulse_profile.csv").size() == 101);
  REQUIRE(fs::exists(d / "rpt" / "rpt_pulse_measured.csv"));
}
