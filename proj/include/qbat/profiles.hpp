#pragma once

// Flight-log ingestion and motion-profile processing.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "current_profile.hpp"
#include "errors.hpp"

namespace qbat {

struct ParseOptions {
  double nominal_rate = 10.0;   // Hz; 0 infers the rate from the median interval
  double sensor_range = 100.0;  // A
  double max_jitter = 0.1;      // fraction of the nominal period
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline bool parse_number(const std::string& s, double& v) {
  if (s.empty()) return false;
  char* end = nullptr;
  v = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(v);
}

struct LogRows {
  std::vector<double> t, i;
  std::vector<std::string> motion;
  std::vector<std::size_t> row;
};

inline LogRows read_log_rows(const std::string& path, double sensor_range) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open log '" + path + "'", "missing_path");
  std::string line;
  if (!std::getline(in, line)) throw InputError("log '" + path + "' is empty", "empty_input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  if (header.size() < 2 || header[0] != "t_s" || header[1] != "i_a")
    throw ParseError(1, "header must start with t_s,i_a");
  int motion_col = -1;
  for (std::size_t c = 2; c < header.size(); ++c)
    if (header[c] == "motion") motion_col = static_cast<int>(c);
  LogRows rows;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size())
      throw ParseError(row, "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
    double t, i;
    if (!parse_number(f[0], t)) throw ParseError(row, "malformed time '" + f[0] + "'");
    if (!parse_number(f[1], i)) throw ParseError(row, "malformed current '" + f[1] + "'");
    if (!rows.t.empty()) {
      if (t == rows.t.back()) throw ParseError(row, "duplicated timestamp " + f[0]);
      if (t < rows.t.back()) throw ParseError(row, "timestamp goes backwards");
    }
    if (std::abs(i) > sensor_range) throw ParseError(row, "current outside the sensor range");
    rows.t.push_back(t);
    rows.i.push_back(i);
    rows.motion.push_back(motion_col >= 0 ? f[motion_col] : std::string());
    rows.row.push_back(row);
  }
  if (rows.t.empty()) throw InputError("log '" + path + "' has no samples", "empty_input");
  return rows;
}

}  // namespace detail

/// Reads a `t_s,i_a[,motion]` log into a uniform profile. Exactly uniform
/// logs are kept verbatim; mildly jittered ones are linearly resampled.
inline CurrentProfile parse_log(const std::string& path, const ParseOptions& o = {}) {
  const auto rows = detail::read_log_rows(path, o.sensor_range);
  const std::size_t n = rows.t.size();
  CurrentProfile p;
  p.source = path;
  double rate = o.nominal_rate;
  if (!(rate > 0.0)) {
    if (n < 2) throw InputError("cannot infer a sample rate from one row", "empty_input");
    std::vector<double> dt(n - 1);
    for (std::size_t k = 1; k < n; ++k) dt[k - 1] = rows.t[k] - rows.t[k - 1];
    std::nth_element(dt.begin(), dt.begin() + dt.size() / 2, dt.end());
    rate = 1.0 / dt[dt.size() / 2];
  }
  p.sample_rate = rate;
  const double period = 1.0 / rate;
  bool uniform = true;
  for (std::size_t k = 1; k < n; ++k) {
    const double dev = std::abs((rows.t[k] - rows.t[k - 1]) - period);
    if (dev > o.max_jitter * period)
      throw ParseError(rows.row[k], "sample interval deviates from the nominal period by more than " +
                                        std::to_string(o.max_jitter * 100.0) + "%");
    if (dev > 1e-9 * period) uniform = false;
  }
  if (uniform) {
    p.samples = rows.i;
    return p;
  }
  const double t0 = rows.t.front(), t1 = rows.t.back();
  const auto count = static_cast<std::size_t>(std::floor((t1 - t0) / period + 1e-9)) + 1;
  p.samples.resize(count);
  std::size_t seg = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const double t = t0 + static_cast<double>(k) * period;
    while (seg + 2 < n && rows.t[seg + 1] <= t) ++seg;
    const double w = std::clamp((t - rows.t[seg]) / (rows.t[seg + 1] - rows.t[seg]), 0.0, 1.0);
    p.samples[k] = (1.0 - w) * rows.i[seg] + w * rows.i[seg + 1];
  }
  return p;
}

/// Canonical CSV: `t_s,i_a`, time = k / rate, shortest round-trip digits.
inline void write_profile_csv(std::ostream& out, const CurrentProfile& p) {
  out << "t_s,i_a\n";
  char buf[64];
  for (std::size_t k = 0; k < p.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(k) / p.sample_rate);
    out << buf << ',';
    std::snprintf(buf, sizeof buf, "%.17g", p.samples[k]);
    out << buf << '\n';
  }
}

inline void write_profile_csv(const std::string& path, const CurrentProfile& p) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'", "unwritable_path");
  write_profile_csv(out, p);
}

/// Trailing moving average; the first window-1 outputs average the prefix.
inline CurrentProfile moving_average(const CurrentProfile& p, int window) {
  if (window < 1) throw InputError("moving-average window must be at least 1");
  if (static_cast<std::size_t>(window) > p.size())
    throw InputError("moving-average window exceeds the profile length");
  CurrentProfile out = p;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const std::size_t lo = k + 1 >= static_cast<std::size_t>(window) ? k + 1 - window : 0;
    double s = 0.0;
    for (std::size_t m = lo; m <= k; ++m) s += p.samples[m];
    out.samples[k] = s / static_cast<double>(k + 1 - lo);
  }
  return out;
}

struct SegmentLabel {
  std::size_t start = 0;  // inclusive sample index
  std::size_t end = 0;    // exclusive
  MotionTag tag = MotionTag::None;

  bool operator==(const SegmentLabel&) const = default;
};

/// Label-file entry in seconds.
struct TimeLabel {
  double start_s = 0.0;
  double end_s = 0.0;
  MotionTag tag = MotionTag::None;
};

inline std::vector<TimeLabel> labels_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw InputError("label document must be a JSON list", "invalid_labels");
  std::vector<TimeLabel> out;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("start_s") || !e.contains("end_s") || !e.contains("tag"))
      throw InputError("label entries need start_s, end_s and tag", "invalid_labels");
    out.push_back({e.at("start_s").get<double>(), e.at("end_s").get<double>(),
                   parse_motion(e.at("tag").get<std::string>())});
  }
  return out;
}

inline nlohmann::json labels_to_json(const std::vector<TimeLabel>& labels) {
  auto j = nlohmann::json::array();
  for (const auto& l : labels)
    j.push_back({{"start_s", l.start_s}, {"end_s", l.end_s}, {"tag", std::string(to_string(l.tag))}});
  return j;
}

inline std::vector<TimeLabel> read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open label file '" + path + "'", "missing_path");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("label file '" + path + "' is not valid JSON: " + e.what(), "invalid_labels");
  }
  return labels_from_json(j);
}

/// Intervals of constant `motion` value in a log, in seconds. Interval ends
/// are one sample period past the last row of the run.
inline std::vector<TimeLabel> labels_from_log(const std::string& path, const ParseOptions& o = {}) {
  const auto rows = detail::read_log_rows(path, o.sensor_range);
  const double period = o.nominal_rate > 0.0 ? 1.0 / o.nominal_rate : 0.0;
  std::vector<TimeLabel> out;
  std::size_t a = 0;
  for (std::size_t k = 1; k <= rows.t.size(); ++k) {
    if (k < rows.t.size() && rows.motion[k] == rows.motion[a]) continue;
    if (!rows.motion[a].empty())
      out.push_back({rows.t[a] - rows.t.front(), rows.t[k - 1] - rows.t.front() + period, parse_motion(rows.motion[a])});
    a = k;
  }
  return out;
}

/// Validates user labels against a profile and converts them to indices.
inline std::vector<SegmentLabel> segment_from_labels(const CurrentProfile& p, const std::vector<TimeLabel>& labels) {
  std::vector<SegmentLabel> out;
  for (const auto& l : labels) {
    if (!(l.end_s > l.start_s) || l.start_s < 0.0)
      throw InputError("label interval [" + std::to_string(l.start_s) + ", " + std::to_string(l.end_s) +
                       ") is empty or negative", "invalid_labels");
    const auto s = static_cast<std::size_t>(std::llround(l.start_s * p.sample_rate));
    const auto e = std::min<std::size_t>(static_cast<std::size_t>(std::llround(l.end_s * p.sample_rate)), p.size());
    if (s >= e) throw InputError("label interval lies outside the profile", "invalid_labels");
    out.push_back({s, e, l.tag});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
  for (std::size_t k = 1; k < out.size(); ++k)
    if (out[k].start < out[k - 1].end) throw InputError("label intervals overlap", "overlapping_labels");
  return out;
}

/// Classification band: window mean within [mean_lo, mean_hi] and window
/// standard deviation within [std_lo, std_hi].
struct Band {
  MotionTag tag = MotionTag::Other;
  double mean_lo = 0.0, mean_hi = 0.0;
  double std_lo = 0.0, std_hi = std::numeric_limits<double>::infinity();
};

struct ThresholdConfig {
  std::vector<Band> bands;
  double window_s = 2.0;
  double overlap = 0.5;
  double min_duration_s = 5.0;

  void validate() const {
    if (!(window_s > 0.0) || !(overlap >= 0.0 && overlap < 1.0) || !(min_duration_s >= 0.0))
      throw InputError("invalid threshold window settings", "invalid_config");
    for (std::size_t a = 0; a < bands.size(); ++a) {
      const auto& A = bands[a];
      if (!(A.mean_hi >= A.mean_lo) || !(A.std_hi >= A.std_lo))
        throw InputError("band for '" + std::string(to_string(A.tag)) + "' has inverted limits", "invalid_config");
      for (std::size_t b = a + 1; b < bands.size(); ++b) {
        const auto& B = bands[b];
        const bool mean_overlap = A.mean_lo <= B.mean_hi && B.mean_lo <= A.mean_hi;
        const bool std_overlap = A.std_lo <= B.std_hi && B.std_lo <= A.std_hi;
        if (mean_overlap && std_overlap)
          throw InputError("bands for '" + std::string(to_string(A.tag)) + "' and '" + std::string(to_string(B.tag)) +
                               "' overlap", "overlapping_bands");
      }
    }
  }
};

/// Window classification followed by run merging. Boundaries between two
/// differently tagged runs are placed at the least-squares change point
/// inside the ambiguous gap; runs shorter than min_duration are dropped.
inline std::vector<SegmentLabel> segment_threshold(const CurrentProfile& p, const ThresholdConfig& cfg) {
  cfg.validate();
  const std::size_t n = p.size();
  const auto W = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.window_s * p.sample_rate)));
  const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(W * (1.0 - cfg.overlap))));
  if (n < W) return {};

  // Per-sample tag: agreed by every window covering the sample.
  constexpr int kUnset = -1, kConflict = -2;
  std::vector<int> tag(n, kUnset);
  std::vector<char> covered(n, 0);
  for (std::size_t s = 0; s + W <= n; s += hop) {
    double m = 0.0;
    for (std::size_t k = s; k < s + W; ++k) m += p.samples[k];
    m /= static_cast<double>(W);
    double v = 0.0;
    for (std::size_t k = s; k < s + W; ++k) v += (p.samples[k] - m) * (p.samples[k] - m);
    const double sd = std::sqrt(v / static_cast<double>(W));
    int t = kConflict;
    for (const auto& b : cfg.bands)
      if (m >= b.mean_lo && m <= b.mean_hi && sd >= b.std_lo && sd <= b.std_hi) t = static_cast<int>(b.tag);
    for (std::size_t k = s; k < s + W; ++k) {
      if (!covered[k]) {
        covered[k] = 1;
        tag[k] = t;
      } else if (tag[k] != t) {
        tag[k] = kConflict;
      }
    }
  }

  struct Run {
    std::size_t a, b;
    int tag;
  };
  std::vector<Run> runs;
  for (std::size_t k = 0; k < n;) {
    if (tag[k] < 0) {
      ++k;
      continue;
    }
    std::size_t e = k;
    while (e < n && tag[e] == tag[k]) ++e;
    if (!runs.empty() && runs.back().tag == tag[k] && k - runs.back().b <= W)
      runs.back().b = e;
    else
      runs.push_back({k, e, tag[k]});
    k = e;
  }

  auto mean_of = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t k = a; k < b; ++k) s += p.samples[k];
    return s / static_cast<double>(b - a);
  };
  for (std::size_t r = 1; r < runs.size(); ++r) {
    Run& L = runs[r - 1];
    Run& R = runs[r];
    if (L.tag == R.tag || R.a - L.b > 2 * W) continue;
    const double ml = mean_of(L.a, L.b), mr = mean_of(R.a, R.b);
    std::size_t best = L.b;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t c = L.b; c <= R.a; ++c) {
      double cost = 0.0;
      for (std::size_t k = L.b; k < c; ++k) cost += (p.samples[k] - ml) * (p.samples[k] - ml);
      for (std::size_t k = c; k < R.a; ++k) cost += (p.samples[k] - mr) * (p.samples[k] - mr);
      if (cost < best_cost) {
        best_cost = cost;
        best = c;
      }
    }
    L.b = best;
    R.a = best;
  }

  const double min_len = cfg.min_duration_s * p.sample_rate;
  std::vector<SegmentLabel> out;
  for (const auto& r : runs)
    if (static_cast<double>(r.b - r.a) >= min_len - 1e-9 && r.b > r.a)
      out.push_back({r.a, r.b, static_cast<MotionTag>(r.tag)});
  return out;
}

enum class Stitch { Repeat, Crossfade };

/// Tiles a segment to at least `target_duration` seconds. Crossfade blends
/// the last k samples of every tile but the final one toward the first
/// sample, then shifts the whole output so its mean equals the segment mean.
inline CurrentProfile periodic_reconstruct(const CurrentProfile& p, const SegmentLabel& seg, double target_duration,
                                           Stitch stitch = Stitch::Repeat, int k = 5) {
  if (seg.end > p.size() || seg.end < seg.start + 2) throw InputError("segment must span at least 2 samples");
  const std::size_t L = seg.end - seg.start;
  const double seg_duration = static_cast<double>(L) / p.sample_rate;
  if (target_duration < seg_duration - 1e-9) throw InputError("target duration is shorter than the segment");
  const auto tiles = static_cast<std::size_t>(
      std::ceil(target_duration * p.sample_rate / static_cast<double>(L) - 1e-9));
  CurrentProfile out;
  out.sample_rate = p.sample_rate;
  out.tag = seg.tag;
  out.source = p.source;
  out.samples.reserve(tiles * L);
  const double* s = p.samples.data() + seg.start;
  for (std::size_t t = 0; t < tiles; ++t) out.samples.insert(out.samples.end(), s, s + L);
  if (stitch == Stitch::Crossfade && tiles > 1) {
    const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), L - 1);
    for (std::size_t t = 0; t + 1 < tiles; ++t)
      for (std::size_t i = 0; i < kk; ++i) {
        const double w = static_cast<double>(i + 1) / static_cast<double>(kk + 1);
        double& y = out.samples[t * L + L - kk + i];
        y = (1.0 - w) * y + w * s[0];
      }
    double seg_mean = 0.0, out_mean = 0.0;
    for (std::size_t i = 0; i < L; ++i) seg_mean += s[i];
    seg_mean /= static_cast<double>(L);
    for (double v : out.samples) out_mean += v;
    out_mean /= static_cast<double>(out.samples.size());
    const double shift = seg_mean - out_mean;
    for (double& v : out.samples) v += shift;
  }
  return out;
}

inline CurrentProfile constant_current(double amps, double duration, double rate) {
  if (!(duration > 0.0) || !(rate > 0.0)) throw InputError("duration and rate must be positive");
  CurrentProfile p;
  p.sample_rate = rate;
  p.tag = MotionTag::Cc;
  p.samples.assign(static_cast<std::size_t>(std::llround(duration * rate)), amps);
  return p;
}

/// Square wave alternating between `high` and `low`, starting high.
inline CurrentProfile square_wave(double high, double low, double period_s, double duty, double duration,
                                  double rate) {
  if (!(period_s > 0.0) || !(duty > 0.0 && duty < 1.0)) throw InputError("invalid square-wave shape");
  CurrentProfile p = constant_current(0.0, duration, rate);
  p.tag = MotionTag::Other;
  const auto per = static_cast<std::size_t>(std::llround(period_s * rate));
  const auto on = static_cast<std::size_t>(std::llround(period_s * duty * rate));
  for (std::size_t k = 0; k < p.size(); ++k) p.samples[k] = (k % per) < on ? high : low;
  return p;
}

struct ProfileStats {
  double mean_current = 0.0;
  double rms_current = 0.0;
  double charge_throughput = 0.0;  // Ah
  double energy_estimate = 0.0;    // Wh at the reference pack voltage
  double peak = 0.0;               // max |I|
  double ripple_std = 0.0;         // population standard deviation
};

inline ProfileStats profile_stats(const CurrentProfile& p, double pack_voltage) {
  if (p.empty()) throw InputError("profile is empty", "empty_input");
  ProfileStats s;
  const double n = static_cast<double>(p.size());
  double sum = 0.0, sq = 0.0;
  for (double v : p.samples) {
    sum += v;
    sq += v * v;
    s.peak = std::max(s.peak, std::abs(v));
  }
  s.mean_current = sum / n;
  s.rms_current = std::sqrt(sq / n);
  double var = 0.0;
  for (double v : p.samples) var += (v - s.mean_current) * (v - s.mean_current);
  s.ripple_std = std::sqrt(var / n);
  s.charge_throughput = sum / p.sample_rate / 3600.0;
  s.energy_estimate = s.charge_throughput * pack_voltage;
  return s;
}

inline nlohmann::json to_json(const ProfileStats& s) {
  return {{"mean_current_a", s.mean_current}, {"rms_current_a", s.rms_current},
          {"charge_throughput_ah", s.charge_throughput}, {"energy_estimate_wh", s.energy_estimate},
          {"peak_a", s.peak}, {"ripple_std_a", s.ripple_std}};
}

/// Metadata sidecar written next to every exported profile.
inline nlohmann::json profile_sidecar(const CurrentProfile& p, double pack_voltage) {
  return {{"sample_rate_hz", p.sample_rate}, {"tag", std::string(to_string(p.tag))}, {"source", p.source},
          {"samples", p.size()}, {"duration_s", p.duration()}, {"stats", to_json(profile_stats(p, pack_voltage))}};
}

/// Shape of the bundled synthetic flight: alternating motion phases at 10 Hz.
struct SyntheticFlightOptions {
  std::uint64_t seed = 42;
  double rate = 10.0;
  double hover_s = 60.0;
  double vertical_s = 40.0;
  double horizontal_s = 60.0;
  int rounds = 2;
};

struct LogSample {
  double t;
  double i;
  MotionTag motion;
};

/// Synthetic quadrotor current log: hover is low-ripple 16 A, horizontal
/// moderate-ripple 17 A, vertical alternates 30 A climbs and 10 A descents
/// (20 A mean).
inline std::vector<LogSample> synthetic_flight_log(const SyntheticFlightOptions& o = {}) {
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<LogSample> out;
  std::size_t k = 0;
  auto emit = [&](MotionTag tag, double seconds) {
    const auto n = static_cast<std::size_t>(std::llround(seconds * o.rate));
    for (std::size_t m = 0; m < n; ++m, ++k) {
      const double tau = static_cast<double>(m) / o.rate;
      double i = 0.0;
      switch (tag) {
        case MotionTag::Hover: i = 16.0 + 0.3 * u(rng); break;
        case MotionTag::Horizontal:
          i = 17.0 + 1.5 * std::sin(2.0 * std::numbers::pi * tau / 6.0) + 0.6 * u(rng);
          break;
        default:
          // Alternating 1.5 s climb and descent phases.
          i = (std::fmod(tau, 3.0) < 1.5 ? 30.0 : 10.0) + 0.8 * u(rng);
          break;
      }
      out.push_back({static_cast<double>(k) / o.rate, i, tag});
    }
  };
  for (int r = 0; r < o.rounds; ++r) {
    emit(MotionTag::Hover, o.hover_s);
    emit(MotionTag::Vertical, o.vertical_s);
    emit(MotionTag::Horizontal, o.horizontal_s);
  }
  return out;
}

inline void write_log_csv(const std::string& path, const std::vector<LogSample>& log) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'", "unwritable_path");
  out << "t_s,i_a,motion\n";
  char buf[96];
  for (const auto& s : log) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,", s.t, s.i);
    out << buf << to_string(s.motion) << '\n';
  }
}

}  // namespace qbat
