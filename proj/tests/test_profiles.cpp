#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "qbat/profiles.hpp"

using namespace qbat;
namespace fs = std::filesystem;

namespace {

CurrentProfile make(std::vector<double> s, double rate = 10.0) {
  CurrentProfile p;
  p.sample_rate = rate;
  p.samples = std::move(s);
  return p;
}

std::string temp_file(const std::string& name, const std::string& body) {
  const auto dir = fs::temp_directory_path() / "qbat_test_profiles";
  fs::create_directories(dir);
  const auto path = (dir / name).string();
  std::ofstream(path) << body;
  return path;
}

std::vector<double> brute_ma(const std::vector<double>& x, int w) {
  std::vector<double> y(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    long double s = 0.0L;
    int n = 0;
    for (int m = 0; m < w; ++m)
      if (k >= static_cast<std::size_t>(m)) {
        s += x[k - m];
        ++n;
      }
    y[k] = static_cast<double>(s / n);
  }
  return y;
}

std::vector<double> brute_reconstruct(const std::vector<double>& x, std::size_t a, std::size_t b, std::size_t tiles,
                                      bool crossfade, int k) {
  const std::size_t L = b - a;
  const std::size_t kk = std::min<std::size_t>(k, L - 1);
  std::vector<double> y(tiles * L);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const std::size_t t = i / L, r = i % L;
    y[i] = x[a + r];
    if (crossfade && tiles > 1 && t + 1 < tiles && r >= L - kk) {
      const double w = static_cast<double>(r - (L - kk) + 1) / static_cast<double>(kk + 1);
      y[i] = (1.0 - w) * x[a + r] + w * x[a];
    }
  }
  if (crossfade && tiles > 1) {
    long double ms = 0.0L, mo = 0.0L;
    for (std::size_t r = 0; r < L; ++r) ms += x[a + r];
    for (double v : y) mo += v;
    const double shift = static_cast<double>(ms / L - mo / y.size());
    for (double& v : y) v += shift;
  }
  return y;
}

void require_segments_valid(const std::vector<SegmentLabel>& s, std::size_t n) {
  for (std::size_t k = 0; k < s.size(); ++k) {
    REQUIRE(s[k].start < s[k].end);
    REQUIRE(s[k].end <= n);
    if (k) REQUIRE(s[k - 1].end <= s[k].start);
  }
}

ThresholdConfig step_bands() {
  ThresholdConfig c;
  c.bands = {{MotionTag::Hover, 14, 18, 0, 1}, {MotionTag::Vertical, 20, 24, 0, 1}};
  return c;
}

}  // namespace

TEST_CASE("two-column log parses to a 10 Hz profile") {
  const auto path = temp_file("two.csv", "t_s,i_a\n0.0,16\n0.1,16\n");
  const auto p = parse_log(path);
  REQUIRE(p.sample_rate == 10.0);
  REQUIRE(p.samples == std::vector<double>{16, 16});
}

TEST_CASE("log errors carry the row number") {
  auto check = [](const std::string& body, const std::string& needle) {
    const auto path = temp_file("bad.csv", body);
    try {
      parse_log(path);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      REQUIRE(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  check("t_s,i_a\n0.0,1\n0.1,1\n0.1,1\n", "row 4");
  check("t_s,i_a\n0.0,1\n0.1,x\n", "row 3");
  check("t_s,i_a\n0.0,1\n0.2,1\n0.1,1\n", "row 4");
  check("t_s,i_a\n0.0,1\n0.1,1\n0.25,1\n", "row 4");
  check("t_s,i_a\n0.0,1\n0.1,150\n", "row 3");
  check("time,current\n0,1\n", "row 1");
  REQUIRE_THROWS_AS(parse_log("/nonexistent/log.csv"), InputError);
  REQUIRE_THROWS_AS(parse_log(temp_file("empty.csv", "")), InputError);
  REQUIRE_THROWS_AS(parse_log(temp_file("header.csv", "t_s,i_a\n")), InputError);
}

TEST_CASE("jittered log resamples to a uniform grid preserving the mean") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> jit(-0.005, 0.005), cur(10.0, 30.0);
  std::ostringstream os;
  os << "t_s,i_a\n";
  std::vector<double> t, i;
  for (int k = 0; k < 2000; ++k) {
    t.push_back(0.1 * k + (k ? jit(rng) : 0.0));
    i.push_back(20.0 + 5.0 * std::sin(0.01 * k) + 0.5 * (cur(rng) - 20.0) * 0.1);
    os.precision(17);
    os << t.back() << ',' << i.back() << '\n';
  }
  const auto p = parse_log(temp_file("jitter.csv", os.str()));
  double trap = 0.0;
  for (std::size_t k = 1; k < t.size(); ++k) trap += 0.5 * (i[k] + i[k - 1]) * (t[k] - t[k - 1]);
  trap /= t.back() - t.front();
  double mean = 0.0;
  for (double v : p.samples) mean += v;
  mean /= static_cast<double>(p.size());
  REQUIRE(p.sample_rate == 10.0);
  REQUIRE(std::abs(mean - trap) <= 1e-3 * std::abs(trap));
}

TEST_CASE("canonical CSV round-trips bit-identically") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  std::vector<double> s(500);
  for (double& v : s) v = u(rng);
  const auto p = make(s);
  const auto path = temp_file("round.csv", "");
  write_profile_csv(path, p);
  const auto q = parse_log(path);
  REQUIRE(q.samples == p.samples);
  const auto path2 = temp_file("round2.csv", "");
  write_profile_csv(path2, q);
  std::ifstream a(path), b(path2);
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  REQUIRE(sa.str() == sb.str());
}

TEST_CASE("moving average examples") {
  REQUIRE(moving_average(make({1, 2, 3, 4}), 2).samples == std::vector<double>{1, 1.5, 2.5, 3.5});
  const auto x = make({3, -1, 4, 1, 5});
  REQUIRE(moving_average(x, 1).samples == x.samples);
  REQUIRE(moving_average(make(std::vector<double>(20, 16.0)), 10).samples == std::vector<double>(20, 16.0));
  REQUIRE_THROWS_AS(moving_average(x, 0), InputError);
  REQUIRE_THROWS_AS(moving_average(x, 6), InputError);
}

TEST_CASE("moving average matches a brute-force oracle") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> len(1, 300);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  for (int c = 0; c < 1000; ++c) {
    const int n = len(rng);
    std::uniform_int_distribution<int> win(1, n);
    const int w = win(rng);
    std::vector<double> s(n);
    for (double& v : s) v = u(rng);
    const auto got = moving_average(make(s), w).samples;
    const auto ref = brute_ma(s, w);
    REQUIRE(got.size() == ref.size());
    double lo = *std::min_element(s.begin(), s.end()), hi = *std::max_element(s.begin(), s.end());
    double mg = 0.0, mi = 0.0;
    for (int k = 0; k < n; ++k) {
      REQUIRE(std::abs(got[k] - ref[k]) <= 1e-12 * std::max(1.0, std::abs(ref[k])));
      mg += got[k];
      mi += s[k];
    }
    REQUIRE(std::abs(mg / n - mi / n) <= (hi - lo) * w / (2.0 * n) + 1e-9);
  }
}

TEST_CASE("label-file segmentation passes valid labels through") {
  const auto p = make(std::vector<double>(200, 16.0), 1.0);
  const auto s = segment_from_labels(p, {{0, 100, MotionTag::Hover}, {100, 200, MotionTag::Vertical}});
  REQUIRE(s == std::vector<SegmentLabel>{{0, 100, MotionTag::Hover}, {100, 200, MotionTag::Vertical}});
  REQUIRE_THROWS_AS(segment_from_labels(p, {{0, 120, MotionTag::Hover}, {100, 200, MotionTag::Vertical}}),
                    InputError);
  REQUIRE_THROWS_AS(segment_from_labels(p, {{50, 50, MotionTag::Hover}}), InputError);
  REQUIRE_THROWS_AS(segment_from_labels(p, {{300, 400, MotionTag::Hover}}), InputError);
}

TEST_CASE("label-file segmentation fuzz") {
  std::mt19937_64 rng(33);
  std::uniform_int_distribution<int> count(0, 8), pos(0, 600);
  const auto p = make(std::vector<double>(500, 1.0), 10.0);
  int accepted = 0;
  for (int c = 0; c < 10000; ++c) {
    std::vector<TimeLabel> labels;
    const int m = count(rng);
    for (int k = 0; k < m; ++k) {
      const int a = pos(rng), b = pos(rng);
      labels.push_back({0.1 * std::min(a, b), 0.1 * std::max(a, b), MotionTag::Hover});
    }
    try {
      const auto s = segment_from_labels(p, labels);
      REQUIRE(s.size() == labels.size());
      require_segments_valid(s, p.size());
      ++accepted;
    } catch (const InputError&) {
    }
  }
  REQUIRE(accepted > 1000);
}

TEST_CASE("threshold segmentation finds a current step") {
  std::vector<double> s(400, 16.0);
  for (std::size_t k = 200; k < s.size(); ++k) s[k] = 22.0;
  const auto seg = segment_threshold(make(s), step_bands());
  REQUIRE(seg.size() == 2);
  REQUIRE(seg[0].tag == MotionTag::Hover);
  REQUIRE(seg[1].tag == MotionTag::Vertical);
  REQUIRE(seg[0].end == 200);
  REQUIRE(seg[1].start == 200);
}

TEST_CASE("threshold segmentation of an unmatched signal is empty") {
  REQUIRE(segment_threshold(make(std::vector<double>(300, 0.0)), step_bands()).empty());
}

TEST_CASE("overlapping bands are rejected") {
  ThresholdConfig c;
  c.bands = {{MotionTag::Hover, 14, 20, 0, 1}, {MotionTag::Vertical, 18, 24, 0.5, 2}};
  REQUIRE_THROWS_AS(segment_threshold(make(std::vector<double>(100, 16.0)), c), InputError);
}

TEST_CASE("threshold segmentation fuzz") {
  std::mt19937_64 rng(55);
  std::uniform_int_distribution<int> pieces(1, 6), plen(1, 120), level(0, 3);
  std::normal_distribution<double> noise(0.0, 0.3);
  const double levels[] = {0.0, 16.0, 22.0, 19.0};
  for (int c = 0; c < 10000; ++c) {
    std::vector<double> s;
    const int np = pieces(rng);
    for (int k = 0; k < np; ++k) {
      const double lv = levels[level(rng)];
      const int n = plen(rng);
      for (int i = 0; i < n; ++i) s.push_back(lv + noise(rng));
    }
    auto cfg = step_bands();
    cfg.min_duration_s = (c % 3) * 2.0;
    const auto seg = segment_threshold(make(s), cfg);
    require_segments_valid(seg, s.size());
    for (const auto& g : seg) REQUIRE(static_cast<double>(g.end - g.start) >= cfg.min_duration_s * 10.0 - 1e-9);
  }
}

TEST_CASE("periodic reconstruction tiling") {
  std::vector<double> s(100);
  for (int k = 0; k < 100; ++k) s[k] = 10.0 + 0.1 * k;
  const auto p = make(s);
  const SegmentLabel seg{0, 100, MotionTag::Hover};
  const auto r = periodic_reconstruct(p, seg, 30.0, Stitch::Repeat);
  REQUIRE(r.size() == 300);
  REQUIRE(r.sample_rate == 10.0);
  REQUIRE(r.tag == MotionTag::Hover);
  for (int t = 0; t < 3; ++t)
    REQUIRE(std::vector<double>(r.samples.begin() + 100 * t, r.samples.begin() + 100 * (t + 1)) == s);
  REQUIRE_THROWS_AS(periodic_reconstruct(p, seg, 5.0), InputError);
  REQUIRE_THROWS_AS(periodic_reconstruct(p, {5, 6, MotionTag::Hover}, 30.0), InputError);
}

TEST_CASE("constant segments reconstruct to constants") {
  const auto p = make(std::vector<double>(50, 16.0));
  for (auto st : {Stitch::Repeat, Stitch::Crossfade}) {
    const auto r = periodic_reconstruct(p, {0, 50, MotionTag::Hover}, 23.0, st);
    for (double v : r.samples) REQUIRE(std::abs(v - 16.0) < 1e-12);
  }
}

TEST_CASE("crossfade softens the sawtooth seam") {
  std::vector<double> s(40);
  for (int k = 0; k < 40; ++k) s[k] = 10.0 + 0.5 * k;
  const auto p = make(s);
  auto max_step = [](const CurrentProfile& r) {
    double m = 0.0;
    for (std::size_t k = 1; k < r.size(); ++k) m = std::max(m, std::abs(r.samples[k] - r.samples[k - 1]));
    return m;
  };
  const SegmentLabel seg{0, 40, MotionTag::Vertical};
  const auto rep = periodic_reconstruct(p, seg, 16.0, Stitch::Repeat);
  const auto cf = periodic_reconstruct(p, seg, 16.0, Stitch::Crossfade, 5);
  REQUIRE(max_step(cf) < max_step(rep));
  double mean = 0.0, seg_mean = 0.0;
  for (double v : cf.samples) mean += v;
  for (double v : s) seg_mean += v;
  REQUIRE(std::abs(mean / cf.size() - seg_mean / 40.0) <= 0.01 * seg_mean / 40.0);
}

TEST_CASE("periodic reconstruction matches a brute-force oracle") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> len(2, 200), kd(0, 12);
  std::uniform_real_distribution<double> u(-50.0, 50.0), ext(1.0, 4.0);
  for (int c = 0; c < 1000; ++c) {
    const int n = len(rng);
    std::vector<double> s(n);
    for (double& v : s) v = u(rng);
    std::uniform_int_distribution<int> ia(0, n - 2);
    const int a = ia(rng);
    std::uniform_int_distribution<int> ib(a + 2, n);
    const int b = ib(rng);
    const auto p = make(s);
    const double seg_d = (b - a) / 10.0;
    const double target = seg_d * ext(rng);
    const auto tiles = static_cast<std::size_t>(std::ceil(target * 10.0 / (b - a) - 1e-9));
    const bool cf = c % 2;
    const int k = kd(rng);
    const auto got = periodic_reconstruct(p, {static_cast<std::size_t>(a), static_cast<std::size_t>(b),
                                              MotionTag::Hover}, target, cf ? Stitch::Crossfade : Stitch::Repeat, k);
    const auto ref = brute_reconstruct(s, a, b, tiles, cf, k);
    REQUIRE(got.size() == ref.size());
    REQUIRE(got.duration() >= target - 1e-9);
    for (std::size_t i = 0; i < ref.size(); ++i) REQUIRE(std::abs(got.samples[i] - ref[i]) <= 1e-12 * 50.0);
    if (!cf) {
      const auto sg = profile_stats(make(std::vector<double>(s.begin() + a, s.begin() + b)), 14.8);
      const auto st = profile_stats(got, 14.8);
      REQUIRE(std::abs(st.charge_throughput - tiles * sg.charge_throughput) <=
              1e-9 * std::max(1e-9, std::abs(st.charge_throughput)) + 1e-12);
    }
  }
}

TEST_CASE("constant-current baselines") {
  const auto a = constant_current(16, 10, 10);
  REQUIRE(a.samples == std::vector<double>(100, 16.0));
  REQUIRE(a.tag == MotionTag::Cc);
  REQUIRE(constant_current(0, 1, 10).samples == std::vector<double>(10, 0.0));
  REQUIRE(profile_stats(constant_current(22, 1, 10), 14.8).mean_current == 22.0);
  REQUIRE_THROWS_AS(constant_current(16, 0, 10), InputError);
}

TEST_CASE("profile statistics examples") {
  const auto s = profile_stats(constant_current(16, 3600, 10), 14.8);
  REQUIRE(std::abs(s.charge_throughput - 16.0) < 1e-9);
  REQUIRE(std::abs(s.energy_estimate - 236.8) < 1e-9);
  const auto z = profile_stats(make(std::vector<double>(10, 0.0)), 14.8);
  REQUIRE(z.mean_current == 0.0);
  REQUIRE(z.rms_current == 0.0);
  REQUIRE(z.peak == 0.0);
  REQUIRE(z.ripple_std == 0.0);
  REQUIRE(z.charge_throughput == 0.0);
  const auto t = profile_stats(make({10, -10}), 14.8);
  REQUIRE(t.mean_current == 0.0);
  REQUIRE(t.rms_current == 10.0);
  REQUIRE_THROWS_AS(profile_stats(make({}), 14.8), InputError);
}

TEST_CASE("profile statistics match a brute-force oracle") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> len(1, 500);
  std::uniform_real_distribution<double> u(-100.0, 100.0), rate(1.0, 50.0);
  for (int c = 0; c < 1000; ++c) {
    std::vector<double> s(len(rng));
    for (double& v : s) v = u(rng);
    const double r = rate(rng);
    const auto st = profile_stats(make(s, r), 14.8);
    long double sum = 0.0L, sq = 0.0L, pk = 0.0L;
    for (double v : s) {
      sum += v;
      sq += static_cast<long double>(v) * v;
      pk = std::max<long double>(pk, std::fabs(v));
    }
    const long double n = s.size(), mean = sum / n;
    long double var = 0.0L;
    for (double v : s) var += (v - mean) * (v - mean);
    auto close = [](double a, long double b) {
      return std::abs(a - static_cast<double>(b)) <= 1e-12 * std::max(1.0, std::abs(static_cast<double>(b)));
    };
    REQUIRE(close(st.mean_current, mean));
    REQUIRE(close(st.rms_current, std::sqrt(sq / n)));
    REQUIRE(close(st.peak, pk));
    REQUIRE(close(st.ripple_std, std::sqrt(var / n)));
    REQUIRE(close(st.charge_throughput, sum / r / 3600.0L));
    REQUIRE(close(st.energy_estimate, sum / r / 3600.0L * 14.8L));
  }
}

TEST_CASE("profile invariants are enforced") {
  REQUIRE_NOTHROW(make({1, 2, 3}).validate());
  REQUIRE_THROWS_AS(make({1, NAN}).validate(), InputError);
  REQUIRE_THROWS_AS(make({1, 101}).validate(), InputError);
  REQUIRE_THROWS_AS(make({1}, 0.0).validate(), InputError);
}

TEST_CASE("labels come from the motion column") {
  const auto path = temp_file("motion.csv",
                              "t_s,i_a,motion\n0.0,16,hover\n0.1,16,hover\n0.2,22,vertical\n0.3,22,vertical\n0.4,0,\n");
  const auto l = labels_from_log(path);
  REQUIRE(l.size() == 2);
  REQUIRE(l[0].tag == MotionTag::Hover);
  REQUIRE(l[0].start_s == 0.0);
  REQUIRE(std::abs(l[0].end_s - 0.2) < 1e-12);
  REQUIRE(l[1].tag == MotionTag::Vertical);
  REQUIRE(std::abs(l[1].end_s - 0.4) < 1e-12);
  REQUIRE_THROWS_AS(labels_from_json(nlohmann::json::object()), InputError);
}

TEST_CASE("synthetic flight log is deterministic and in range") {
  const auto a = synthetic_flight_log(), b = synthetic_flight_log();
  REQUIRE(a.size() == b.size());
  REQUIRE(!a.empty());
  for (std::size_t k = 0; k < a.size(); ++k) {
    REQUIRE(a[k].i == b[k].i);
    REQUIRE(std::abs(a[k].i) <= 100.0);
  }
}
