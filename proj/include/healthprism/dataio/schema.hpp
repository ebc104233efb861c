#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace healthprism::dataio {

enum class FeatureKind { numeric, categorical };

struct FeatureDescriptor {
  std::string id;
  std::string name;
  std::string category;
  FeatureKind kind = FeatureKind::numeric;
  std::vector<std::string> categories;
  std::string unit;
};

void to_json(nlohmann::json& j, const FeatureDescriptor& f);
void from_json(const nlohmann::json& j, FeatureDescriptor& f);

// Ordered feature list. Encoded context patterns put the numeric features
// first (schema order) followed by one one-hot block per categorical
// feature (schema order).
class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<FeatureDescriptor> features);

  const std::vector<FeatureDescriptor>& features() const { return features_; }
  std::size_t size() const { return features_.size(); }
  const FeatureDescriptor& operator[](std::size_t i) const { return features_[i]; }

  std::optional<std::size_t> find(const std::string& id) const;
  std::size_t index(const std::string& id) const;  // throws schema error

  // Schema positions of numeric / categorical features, in schema order.
  const std::vector<std::size_t>& numeric() const { return numeric_; }
  const std::vector<std::size_t>& categorical() const { return categorical_; }

  // Length of the encoded context pattern.
  std::size_t encoded_width() const;
  // For every encoded position, the schema position it came from.
  std::vector<std::size_t> encoded_owner() const;
  // First encoded position of each feature (numeric: its single slot).
  std::vector<std::size_t> encoded_offset() const;

  nlohmann::json to_json() const;
  static Schema from_json(const nlohmann::json& j);

 private:
  std::vector<FeatureDescriptor> features_;
  std::vector<std::size_t> numeric_;
  std::vector<std::size_t> categorical_;
};

// 45 numeric + gender + learning_mode = 50 encoded positions.
Schema default_schema();

inline constexpr const char* kGenderFeature = "gender";
inline constexpr const char* kAgeFeature = "age";
inline constexpr const char* kLearningModeFeature = "learning_mode";

}  // namespace healthprism::dataio
