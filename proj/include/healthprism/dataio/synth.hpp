#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "healthprism/dataio/records.hpp"

namespace healthprism::dataio {

// A context-driven label: P(label = 1) = sigmoid(gain * sum_j w_j z_j + bias),
// with z_j the standardized answer to features[j]. Labels are then flipped
// with probability flip_rate.
struct PlantedContextEffect {
  Indicator indicator = Indicator::RESI;
  std::vector<std::string> features;
  std::vector<double> weights;
  double gain = 2.5;
  double bias = 0.3;
  double flip_rate = 0.0;
};

struct SynthConfig {
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  double female_proportion = 0.5;
  double adolescent_proportion = 0.5;
  // face-to-face, mixed, online
  std::array<double, 3> learning_mode_proportions{0.6, 0.25, 0.15};
  double missing_rate = 0.05;
  int wear_days = 7;
  // Monday 2024-01-01 00:00 UTC.
  std::int64_t start_epoch = 1704067200;
  int max_wear_gaps = 3;
  // MVPA = 1 iff the mean acceleration magnitude over this daily window
  // (minutes after midnight) exceeds the threshold.
  int mvpa_window_start = 18 * 60;
  int mvpa_window_minutes = 60;
  double mvpa_threshold = 0.68;
  double mvpa_flip_rate = 0.0;
  std::vector<PlantedContextEffect> context_effects = default_context_effects();

  static std::vector<PlantedContextEffect> default_context_effects();

  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

// Mean per-minute magnitude sqrt(ax^2 + ay^2 + az^2) over the minutes of the
// record whose time of day falls inside the configured window.
double window_magnitude(const RawMotionRecord& record, const SynthConfig& config);

// Deterministic in config. Participant i draws from its own stream, so the
// first m participants do not depend on n.
RawDataset generate_synthetic(const SynthConfig& config);

}  // namespace healthprism::dataio
