#include "healthprism/dataio/records.hpp"

namespace healthprism::dataio {

std::string_view to_string(Gender g) { return g == Gender::female ? "female" : "male"; }

std::string_view to_string(AgeGroup g) { return g == AgeGroup::child ? "child" : "adolescent"; }

std::string_view to_string(LearningMode m) {
  switch (m) {
    case LearningMode::face_to_face: return "face-to-face";
    case LearningMode::mixed: return "mixed";
    case LearningMode::online: return "online";
  }
  return "face-to-face";
}

std::optional<Gender> parse_gender(std::string_view s) {
  if (s == "female") return Gender::female;
  if (s == "male") return Gender::male;
  return std::nullopt;
}

std::optional<AgeGroup> parse_age_group(std::string_view s) {
  if (s == "child") return AgeGroup::child;
  if (s == "adolescent") return AgeGroup::adolescent;
  return std::nullopt;
}

std::optional<LearningMode> parse_learning_mode(std::string_view s) {
  if (s == "face-to-face") return LearningMode::face_to_face;
  if (s == "mixed") return LearningMode::mixed;
  if (s == "online") return LearningMode::online;
  return std::nullopt;
}

AgeGroup age_group_of(int age) { return age <= 11 ? AgeGroup::child : AgeGroup::adolescent; }

nlohmann::json stats_to_json(const NormalizationStats& stats) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, range] : stats) j[id] = {{"min", range.min}, {"max", range.max}};
  return j;
}

NormalizationStats stats_from_json(const nlohmann::json& j) {
  NormalizationStats stats;
  try {
    for (const auto& [id, range] : j.items()) {
      stats[id] = FeatureRange{range.at("min").get<double>(), range.at("max").get<double>()};
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("malformed normalization stats: ") + e.what());
  }
  return stats;
}

std::optional<std::size_t> Dataset::find(const std::string& participant_id) const {
  for (std::size_t i = 0; i < participants.size(); ++i) {
    if (participants[i].id == participant_id) return i;
  }
  return std::nullopt;
}

}  // namespace healthprism::dataio
