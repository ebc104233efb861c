#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "healthprism/common.hpp"
#include "healthprism/dataio/schema.hpp"

namespace healthprism::dataio {

// A questionnaire answer: a number for numeric features, a category label
// for categorical ones. std::nullopt marks a missing answer.
using ContextValue = std::optional<std::variant<double, std::string>>;

struct RawContextRecord {
  std::string participant_id;
  // Aligned with the schema; values[i] answers schema feature i.
  std::vector<ContextValue> values;
};

struct MotionSample {
  std::int64_t timestamp = 0;  // epoch seconds
  double ax = 0.0;
  double ay = 0.0;
  double az = 0.0;
};

struct RawMotionRecord {
  std::string participant_id;
  std::vector<MotionSample> samples;  // strictly increasing timestamps
};

// One binary label per indicator, 1 = normal level, in kIndicators order.
using HealthLabels = std::array<std::uint8_t, kIndicatorCount>;

enum class Gender { female, male };
enum class AgeGroup { child, adolescent };
enum class LearningMode { face_to_face, mixed, online };

std::string_view to_string(Gender g);
std::string_view to_string(AgeGroup g);
std::string_view to_string(LearningMode m);
std::optional<Gender> parse_gender(std::string_view s);
std::optional<AgeGroup> parse_age_group(std::string_view s);
std::optional<LearningMode> parse_learning_mode(std::string_view s);

// child 6-11, adolescent 12-18.
AgeGroup age_group_of(int age);

struct ContextPattern {
  std::vector<double> values;
};

struct MotionPattern {
  // Channel-major kMotionAxes x kWeekMinutes, each value in [0, 1].
  std::vector<float> values;
  // Slot observed at least once.
  std::vector<std::uint8_t> coverage;

  std::span<const float> axis(std::size_t a) const {
    return std::span<const float>(values).subspan(a * kWeekMinutes, kWeekMinutes);
  }
};

struct Participant {
  std::string id;
  Gender gender = Gender::female;
  int age = 0;
  AgeGroup age_group = AgeGroup::child;
  LearningMode learning_mode = LearningMode::face_to_face;
  ContextPattern context;
  MotionPattern motion;
  HealthLabels labels{};
  // Per schema feature: true when the value was filled in by imputation.
  std::vector<std::uint8_t> imputed_mask;
  // Completed (post-imputation) raw answers, aligned with the schema.
  std::vector<std::variant<double, std::string>> completed;
};

struct FeatureRange {
  double min = 0.0;
  double max = 0.0;
};

// Min/max per numeric feature id.
using NormalizationStats = std::map<std::string, FeatureRange>;

nlohmann::json stats_to_json(const NormalizationStats& stats);
NormalizationStats stats_from_json(const nlohmann::json& j);

// Records as they arrive from disk or the generator: nothing imputed,
// scaled, or resampled yet.
struct RawDataset {
  Schema schema;
  std::vector<RawContextRecord> context;
  // Same order as context.
  std::vector<RawMotionRecord> motion;
  std::vector<HealthLabels> labels;
};

struct Dataset {
  Schema schema;
  std::vector<Participant> participants;
  NormalizationStats normalization_stats;

  std::optional<std::size_t> find(const std::string& participant_id) const;
};

}  // namespace healthprism::dataio
