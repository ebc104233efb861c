#include "healthprism/interpret/influence.hpp"

#include <algorithm>

#include "healthprism/dataio/schema.hpp"

namespace healthprism::interpret {

std::string_view to_string(Level level) {
  switch (level) {
    case Level::individual:
      return "individual";
    case Level::group:
      return "group";
    case Level::overall:
      return "overall";
  }
  return "?";
}

nlohmann::json InfluenceCurve::to_json() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points) {
    if (p.category.empty()) {
      pts.push_back({{"value", p.value}, {"probability", p.probability}});
    } else {
      pts.push_back({{"category", p.category}, {"probability", p.probability}});
    }
  }
  nlohmann::json j = {{"indicator", std::string(healthprism::to_string(indicator))},
                      {"level", std::string(interpret::to_string(level))},
                      {"points", pts}};
  if (feature.empty()) {
    j["motion_window"] = {{"start", window_start}, {"window", window}};
  } else {
    j["feature"] = feature;
  }
  return j;
}

double grid_value(int i, int steps) {
  if (steps < 2) fail(ErrorCode::argument, "an influence grid needs at least 2 points");
  return static_cast<double>(i) / static_cast<double>(steps - 1);
}

InfluenceEngine::InfluenceEngine(const model::HPModel& model, const dataio::Dataset& dataset)
    : model_(model), dataset_(dataset) {
  model_.require_trained();
  const auto& net = model_.network;
  motion_embeddings_.reserve(dataset_.participants.size());
  probabilities_.reserve(dataset_.participants.size());
  for (const auto& p : dataset_.participants) {
    motion_embeddings_.push_back(net.motion_embedding(p.motion.values));
    probabilities_.push_back(
        model::sigmoid(net.head_logit(net.context_embedding(p.context.values), motion_embeddings_.back())));
  }
}

double InfluenceEngine::probability(std::size_t i) const { return probabilities_.at(i); }

void InfluenceEngine::check_subjects(std::span<const std::size_t> subjects) const {
  if (subjects.empty()) fail(ErrorCode::argument, "influence needs at least one subject");
  for (auto i : subjects) {
    if (i >= dataset_.participants.size()) fail(ErrorCode::argument, "subject index out of range");
  }
}

std::size_t InfluenceEngine::numeric_slot(const std::string& feature) const {
  const auto& schema = dataset_.schema;
  const auto f = schema.find(feature);
  if (!f) fail(ErrorCode::not_found, "unknown feature '" + feature + "'");
  if (schema[*f].kind != dataio::FeatureKind::numeric) {
    fail(ErrorCode::type, "feature '" + feature + "' is categorical; use categorical influence");
  }
  return schema.encoded_offset()[*f];
}

std::pair<std::size_t, std::size_t> InfluenceEngine::categorical_block(const std::string& feature,
                                                                       const std::string& category) const {
  const auto& schema = dataset_.schema;
  const auto f = schema.find(feature);
  if (!f) fail(ErrorCode::not_found, "unknown feature '" + feature + "'");
  const auto& desc = schema[*f];
  if (desc.kind != dataio::FeatureKind::categorical) {
    fail(ErrorCode::type, "feature '" + feature + "' is numeric; use numeric influence");
  }
  const auto it = std::find(desc.categories.begin(), desc.categories.end(), category);
  if (it == desc.categories.end()) {
    fail(ErrorCode::encoding, "feature '" + feature + "' has no category '" + category + "'");
  }
  return {schema.encoded_offset()[*f], static_cast<std::size_t>(it - desc.categories.begin())};
}

double InfluenceEngine::with_context(std::size_t i, std::span<const double> context) const {
  const auto& net = model_.network;
  return model::sigmoid(net.head_logit(net.context_embedding(context), motion_embeddings_[i]));
}

double InfluenceEngine::numeric_at(const std::string& feature, double v,
                                   std::span<const std::size_t> subjects) const {
  const std::size_t slot = numeric_slot(feature);
  check_subjects(subjects);
  double sum = 0.0;
  std::vector<double> ctx;
  for (auto i : subjects) {
    ctx = dataset_.participants[i].context.values;
    ctx.at(slot) = v;
    sum += with_context(i, ctx);
  }
  return sum / static_cast<double>(subjects.size());
}

double InfluenceEngine::categorical_at(const std::string& feature, const std::string& category,
                                       std::span<const std::size_t> subjects) const {
  const auto [offset, hot] = categorical_block(feature, category);
  const std::size_t width = dataset_.schema[*dataset_.schema.find(feature)].categories.size();
  check_subjects(subjects);
  double sum = 0.0;
  std::vector<double> ctx;
  for (auto i : subjects) {
    ctx = dataset_.participants[i].context.values;
    for (std::size_t c = 0; c < width; ++c) ctx.at(offset + c) = c == hot ? 1.0 : 0.0;
    sum += with_context(i, ctx);
  }
  return sum / static_cast<double>(subjects.size());
}

double InfluenceEngine::motion_at(std::size_t start, std::size_t W, double v,
                                  std::span<const std::size_t> subjects) const {
  const auto T = static_cast<std::size_t>(model_.config().motion_length);
  if (W == 0 || start >= T || W > T - start) {
    fail(ErrorCode::argument, "motion window [" + std::to_string(start) + ", " + std::to_string(start + W) +
                                  ") outside [0, " + std::to_string(T) + ")");
  }
  check_subjects(subjects);
  const auto& net = model_.network;
  const auto C = static_cast<std::size_t>(model_.config().motion_channels);
  double sum = 0.0;
  std::vector<float> motion;
  for (auto i : subjects) {
    const auto& p = dataset_.participants[i];
    if (!model_.config().uses_motion()) {
      sum += probabilities_[i];
      continue;
    }
    motion = p.motion.values;
    for (std::size_t c = 0; c < C; ++c) {
      std::fill_n(motion.begin() + static_cast<long>(c * T + start), W, static_cast<float>(v));
    }
    sum += model::sigmoid(net.head_logit(net.context_embedding(p.context.values), net.motion_embedding(motion)));
  }
  return sum / static_cast<double>(subjects.size());
}

InfluenceCurve InfluenceEngine::numeric(const std::string& feature, std::span<const std::size_t> subjects,
                                        Level level, int steps) const {
  InfluenceCurve curve{model_.indicator, level, feature, 0, 0, {}};
  for (int i = 0; i < steps; ++i) {
    const double v = grid_value(i, steps);
    curve.points.push_back({v, "", numeric_at(feature, v, subjects)});
  }
  return curve;
}

InfluenceCurve InfluenceEngine::categorical(const std::string& feature, std::span<const std::size_t> subjects,
                                            Level level) const {
  const auto f = dataset_.schema.find(feature);
  if (!f) fail(ErrorCode::not_found, "unknown feature '" + feature + "'");
  if (dataset_.schema[*f].kind != dataio::FeatureKind::categorical) {
    fail(ErrorCode::type, "feature '" + feature + "' is numeric; use numeric influence");
  }
  InfluenceCurve curve{model_.indicator, level, feature, 0, 0, {}};
  for (const auto& cat : dataset_.schema[*f].categories) {
    curve.points.push_back({0.0, cat, categorical_at(feature, cat, subjects)});
  }
  return curve;
}

InfluenceCurve InfluenceEngine::motion_window(std::size_t start, std::size_t W,
                                              std::span<const std::size_t> subjects, Level level,
                                              int steps) const {
  InfluenceCurve curve{model_.indicator, level, "", start, W, {}};
  for (int i = 0; i < steps; ++i) {
    const double v = grid_value(i, steps);
    curve.points.push_back({v, "", motion_at(start, W, v, subjects)});
  }
  return curve;
}

InfluenceCurve influence_numeric(const model::HPModel& model, const dataio::Dataset& dataset,
                                 const std::string& feature, std::span<const std::size_t> subjects,
                                 Level level, int steps) {
  return InfluenceEngine(model, dataset).numeric(feature, subjects, level, steps);
}

InfluenceCurve influence_categorical(const model::HPModel& model, const dataio::Dataset& dataset,
                                     const std::string& feature, std::span<const std::size_t> subjects,
                                     Level level) {
  return InfluenceEngine(model, dataset).categorical(feature, subjects, level);
}

InfluenceCurve influence_motion_window(const model::HPModel& model, const dataio::Dataset& dataset,
                                       std::size_t start, std::size_t W, std::span<const std::size_t> subjects,
                                       Level level, int steps) {
  return InfluenceEngine(model, dataset).motion_window(start, W, subjects, level, steps);
}

}  // namespace healthprism::interpret
