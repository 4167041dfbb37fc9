#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"

namespace qbat {

enum class MotionTag { None, Hover, Vertical, Horizontal, Cc, Other };

inline std::string_view to_string(MotionTag t) {
  switch (t) {
    case MotionTag::Hover: return "hover";
    case MotionTag::Vertical: return "vertical";
    case MotionTag::Horizontal: return "horizontal";
    case MotionTag::Cc: return "cc";
    case MotionTag::Other: return "other";
    case MotionTag::None: break;
  }
  return "";
}

inline MotionTag parse_motion(std::string_view s) {
  if (s == "hover") return MotionTag::Hover;
  if (s == "vertical") return MotionTag::Vertical;
  if (s == "horizontal") return MotionTag::Horizontal;
  if (s == "cc") return MotionTag::Cc;
  if (s == "other") return MotionTag::Other;
  if (s.empty() || s == "none") return MotionTag::None;
  throw InputError("unknown motion tag '" + std::string(s) + "'", "unknown_tag");
}

/// Uniformly sampled applied current, discharge positive. Sample k is held
/// over [k/rate, (k+1)/rate).
struct CurrentProfile {
  double sample_rate = 10.0;  // Hz
  std::vector<double> samples;
  MotionTag tag = MotionTag::None;
  std::string source;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double period() const { return 1.0 / sample_rate; }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }

  /// Throws InputError unless the invariants hold.
  void validate(double sensor_range = 100.0) const {
    if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) throw InputError("sample rate must be positive");
    for (std::size_t k = 0; k < samples.size(); ++k) {
      if (!std::isfinite(samples[k])) throw InputError("sample " + std::to_string(k) + " is not finite");
      if (std::abs(samples[k]) > sensor_range)
        throw InputError("sample " + std::to_string(k) + " exceeds the sensor range of " +
                         std::to_string(sensor_range) + " A", "out_of_range");
    }
  }
};

}  // namespace qbat
