#include "healthprism/dataio/schema.hpp"

#include <set>

#include "healthprism/common.hpp"

namespace healthprism::dataio {

void to_json(nlohmann::json& j, const FeatureDescriptor& f) {
  j = nlohmann::json{{"id", f.id},
                     {"name", f.name},
                     {"category", f.category},
                     {"kind", f.kind == FeatureKind::numeric ? "numeric" : "categorical"},
                     {"categories", f.categories},
                     {"unit", f.unit}};
}

void from_json(const nlohmann::json& j, FeatureDescriptor& f) {
  try {
    f.id = j.at("id").get<std::string>();
    f.name = j.value("name", f.id);
    f.category = j.value("category", "");
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "numeric") {
      f.kind = FeatureKind::numeric;
    } else if (kind == "categorical") {
      f.kind = FeatureKind::categorical;
    } else {
      fail(ErrorCode::schema, "feature '" + f.id + "' has unknown kind '" + kind + "'");
    }
    f.categories = j.value("categories", std::vector<std::string>{});
    f.unit = j.value("unit", "");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::schema, std::string("malformed feature descriptor: ") + e.what());
  }
}

Schema::Schema(std::vector<FeatureDescriptor> features) : features_(std::move(features)) {
  std::set<std::string> seen;
  for (std::size_t i = 0; i < features_.size(); ++i) {
    const auto& f = features_[i];
    if (f.id.empty()) fail(ErrorCode::schema, "feature id must be nonempty");
    if (!seen.insert(f.id).second) fail(ErrorCode::schema, "duplicate feature id '" + f.id + "'");
    if (f.kind == FeatureKind::categorical) {
      if (f.categories.size() < 2) {
        fail(ErrorCode::schema, "categorical feature '" + f.id + "' needs at least 2 categories");
      }
      if (std::set<std::string>(f.categories.begin(), f.categories.end()).size() !=
          f.categories.size()) {
        fail(ErrorCode::schema, "categorical feature '" + f.id + "' repeats a category");
      }
      categorical_.push_back(i);
    } else {
      numeric_.push_back(i);
    }
  }
}

std::optional<std::size_t> Schema::find(const std::string& id) const {
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (features_[i].id == id) return i;
  }
  return std::nullopt;
}

std::size_t Schema::index(const std::string& id) const {
  if (auto i = find(id)) return *i;
  fail(ErrorCode::schema, "unknown feature id '" + id + "'");
}

std::size_t Schema::encoded_width() const {
  std::size_t width = numeric_.size();
  for (std::size_t i : categorical_) width += features_[i].categories.size();
  return width;
}

std::vector<std::size_t> Schema::encoded_owner() const {
  std::vector<std::size_t> owner(numeric_);
  for (std::size_t i : categorical_) owner.insert(owner.end(), features_[i].categories.size(), i);
  return owner;
}

std::vector<std::size_t> Schema::encoded_offset() const {
  std::vector<std::size_t> offset(features_.size(), 0);
  std::size_t pos = 0;
  for (std::size_t i : numeric_) offset[i] = pos++;
  for (std::size_t i : categorical_) {
    offset[i] = pos;
    pos += features_[i].categories.size();
  }
  return offset;
}

nlohmann::json Schema::to_json() const { return nlohmann::json(features_); }

Schema Schema::from_json(const nlohmann::json& j) {
  if (!j.is_array()) fail(ErrorCode::schema, "schema must be a JSON array of feature descriptors");
  return Schema(j.get<std::vector<FeatureDescriptor>>());
}

Schema default_schema() {
  struct Row {
    const char* id;
    const char* name;
    const char* category;
    const char* unit;
  };
  // clang-format off
  static const Row numeric[] = {
    {"age", "Age", "demographics", "years"},
    {"height", "Height", "demographics", "cm"},
    {"weight", "Weight", "demographics", "kg"},
    {"bmi", "Body mass index", "demographics", "kg/m2"},
    {"siblings", "Number of siblings", "demographics", "count"},
    {"household_income", "Monthly household income", "socioeconomic", "kHKD"},
    {"parent_education", "Parental education", "socioeconomic", "years"},
    {"household_size", "Household size", "socioeconomic", "persons"},
    {"living_area", "Living area", "socioeconomic", "m2"},
    {"parent_work_hours", "Parental working hours", "socioeconomic", "h/week"},
    {"public_housing", "Public housing", "socioeconomic", "0/1"},
    {"sleep_weekday", "Sleep duration on weekdays", "sleep", "h"},
    {"sleep_weekend", "Sleep duration on weekends", "sleep", "h"},
    {"bedtime_weekday", "Bedtime on weekdays", "sleep", "h after 18:00"},
    {"bedtime_weekend", "Bedtime on weekends", "sleep", "h after 18:00"},
    {"sleep_latency", "Sleep latency", "sleep", "min"},
    {"sleep_quality", "Sleep quality", "sleep", "score 1-5"},
    {"nap_frequency", "Naps", "sleep", "per week"},
    {"fruit", "Fruit intake", "diet", "servings/day"},
    {"vegetables", "Vegetable intake", "diet", "servings/day"},
    {"sugary_drinks", "Sugary drinks", "diet", "per week"},
    {"fast_food", "Fast food", "diet", "per week"},
    {"breakfast", "Breakfast", "diet", "days/week"},
    {"water", "Water intake", "diet", "glasses/day"},
    {"snacks", "Snacks", "diet", "per day"},
    {"homework_hours", "Homework", "academic", "h/day"},
    {"tutoring_hours", "Tutoring", "academic", "h/week"},
    {"school_satisfaction", "School satisfaction", "academic", "score 1-5"},
    {"academic_stress", "Academic stress", "academic", "score 1-5"},
    {"extracurricular_hours", "Extracurricular activities", "academic", "h/week"},
    {"online_class_hours", "Online classes", "academic", "h/week"},
    {"peer_support", "Peer support", "academic", "score 1-5"},
    {"teacher_support", "Teacher support", "academic", "score 1-5"},
    {"screen_weekday", "Screen time on weekdays", "device-usage", "h/day"},
    {"screen_weekend", "Screen time on weekends", "device-usage", "h/day"},
    {"gaming_hours", "Video gaming", "device-usage", "h/day"},
    {"social_media_hours", "Social media", "device-usage", "h/day"},
    {"device_before_bed", "Device use before bed", "device-usage", "days/week"},
    {"phone_years", "Years owning a phone", "device-usage", "years"},
    {"sport_days", "Days with sport", "exercise", "days/week"},
    {"sport_minutes", "Sport duration", "exercise", "min/day"},
    {"outdoor_play", "Outdoor play", "exercise", "h/week"},
    {"pe_lessons", "PE lessons", "exercise", "per week"},
    {"active_commute", "Active commuting", "exercise", "min/day"},
    {"sedentary_hours", "Sedentary time", "exercise", "h/day"},
  };
  // clang-format on
  std::vector<FeatureDescriptor> features;
  for (const auto& row : numeric) {
    features.push_back({row.id, row.name, row.category, FeatureKind::numeric, {}, row.unit});
    if (std::string(row.id) == "siblings") {
      features.push_back({kGenderFeature, "Gender", "demographics", FeatureKind::categorical,
                          {"female", "male"}, ""});
    }
    if (std::string(row.id) == "extracurricular_hours") {
      features.push_back({kLearningModeFeature, "Learning mode", "academic",
                          FeatureKind::categorical, {"face-to-face", "mixed", "online"}, ""});
    }
  }
  return Schema(std::move(features));
}

}  // namespace healthprism::dataio
