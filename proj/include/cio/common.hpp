#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace cio {

enum class ErrorCode {
  invalid_argument,
  not_found,
  exists,
  store_full,
  not_an_archive,
  corrupt,
  finalized,
  io,
  unplaceable,
  config,
  runtime,
};

const char* to_string(ErrorCode code);

/// Every failure surfaced by the library carries one of the codes above so
/// callers can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline constexpr std::uint64_t KiB = 1024;
inline constexpr std::uint64_t MiB = 1024 * KiB;
inline constexpr std::uint64_t GiB = 1024 * MiB;

/// Simulated clock value in integer microseconds.
struct SimTime {
  std::int64_t us = 0;

  static constexpr SimTime from_seconds(double s) {
    return SimTime{static_cast<std::int64_t>(s * 1e6 + 0.5)};
  }
  constexpr double seconds() const { return static_cast<double>(us) / 1e6; }
  friend constexpr auto operator<=>(SimTime, SimTime) = default;
  friend constexpr SimTime operator+(SimTime a, SimTime b) { return {a.us + b.us}; }
  friend constexpr SimTime operator-(SimTime a, SimTime b) { return {a.us - b.us}; }
};

/// MB/s (MiB per second) to bytes per microsecond.
constexpr double mbps_to_bytes_per_us(double mbps) {
  return mbps * static_cast<double>(MiB) / 1e6;
}

constexpr double bytes_to_mb(std::uint64_t bytes) {
  return static_cast<double>(bytes) / static_cast<double>(MiB);
}

}  // namespace cio
