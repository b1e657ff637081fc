#pragma once

#include <cstdint>
#include <limits>

namespace avatar {

/// Monotonic time in microseconds. Every clock in the stack uses this unit.
using Micros = std::int64_t;

inline constexpr Micros kForever = std::numeric_limits<Micros>::max();

constexpr Micros from_seconds(double s) { return static_cast<Micros>(s * 1e6 + (s >= 0 ? 0.5 : -0.5)); }
constexpr Micros from_millis(double ms) { return static_cast<Micros>(ms * 1e3 + (ms >= 0 ? 0.5 : -0.5)); }
constexpr double to_seconds(Micros us) { return static_cast<double>(us) * 1e-6; }
constexpr double to_millis(Micros us) { return static_cast<double>(us) * 1e-3; }

} // namespace avatar
