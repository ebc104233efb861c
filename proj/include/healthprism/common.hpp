#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace healthprism {

enum class ErrorCode {
  parse,
  schema,
  integrity,
  imputation,
  encoding,
  config,
  shape,
  training,
  divergence,
  state,
  evaluation,
  argument,
  type,
  io,
  not_found,
};

std::string_view to_string(ErrorCode code);

// Every failure surfaced by the library carries a machine-readable code so the
// CLI and the HTTP layer can map it without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

enum class Indicator { MVPA = 0, PHYF, VVAS, PSYF, RESI, CONN };

inline constexpr std::size_t kIndicatorCount = 6;

// Fixed global order; also the radar axis order.
inline constexpr std::array<Indicator, kIndicatorCount> kIndicators{
    Indicator::MVPA, Indicator::PHYF, Indicator::VVAS,
    Indicator::PSYF, Indicator::RESI, Indicator::CONN};

std::string_view to_string(Indicator indicator);
std::optional<Indicator> parse_indicator(std::string_view name);

inline std::size_t index_of(Indicator indicator) {
  return static_cast<std::size_t>(indicator);
}

// 7 days x 24 hours x 60 minutes.
inline constexpr std::size_t kWeekMinutes = 10080;
inline constexpr std::size_t kMotionAxes = 3;

}  // namespace healthprism
