#include "healthprism/common.hpp"

namespace healthprism {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse: return "parse_error";
    case ErrorCode::schema: return "schema_error";
    case ErrorCode::integrity: return "integrity_error";
    case ErrorCode::imputation: return "imputation_error";
    case ErrorCode::encoding: return "encoding_error";
    case ErrorCode::config: return "config_error";
    case ErrorCode::shape: return "shape_error";
    case ErrorCode::training: return "training_error";
    case ErrorCode::divergence: return "divergence_error";
    case ErrorCode::state: return "state_error";
    case ErrorCode::evaluation: return "evaluation_error";
    case ErrorCode::argument: return "argument_error";
    case ErrorCode::type: return "type_error";
    case ErrorCode::io: return "io_error";
    case ErrorCode::not_found: return "not_found";
  }
  return "error";
}

std::string_view to_string(Indicator indicator) {
  switch (indicator) {
    case Indicator::MVPA: return "MVPA";
    case Indicator::PHYF: return "PHYF";
    case Indicator::VVAS: return "VVAS";
    case Indicator::PSYF: return "PSYF";
    case Indicator::RESI: return "RESI";
    case Indicator::CONN: return "CONN";
  }
  return "?";
}

std::optional<Indicator> parse_indicator(std::string_view name) {
  for (Indicator indicator : kIndicators) {
    if (to_string(indicator) == name) return indicator;
  }
  return std::nullopt;
}

}  // namespace healthprism
