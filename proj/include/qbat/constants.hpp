#pragma once

namespace qbat::constants {

inline constexpr double kFaraday = 96485.33212;  // C/mol
inline constexpr double kGas = 8.314462618;      // J/(mol K)
inline constexpr double kSecondsPerHour = 3600.0;

}  // namespace qbat::constants
