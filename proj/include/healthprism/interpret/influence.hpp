#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "healthprism/dataio/records.hpp"
#include "healthprism/model/hpmodel.hpp"

namespace healthprism::interpret {

enum class Level { individual, group, overall };

std::string_view to_string(Level level);

struct InfluencePoint {
  double value = 0.0;    // numeric grid value (unused for categories)
  std::string category;  // categorical point label
  double probability = 0.0;
};

struct InfluenceCurve {
  Indicator indicator = Indicator::MVPA;
  Level level = Level::overall;
  std::string feature;  // context feature id; empty for motion windows
  std::size_t window_start = 0;
  std::size_t window = 0;
  std::vector<InfluencePoint> points;

  nlohmann::json to_json() const;
};

inline constexpr int kInfluenceSteps = 21;

// Grid value i / (steps - 1); the ends are exactly 0 and 1.
double grid_value(int i, int steps);

// Perturbation analysis for one model over one dataset. The unperturbed
// motion embedding of every participant is computed once, so context
// perturbations only rerun the context encoder and head.
class InfluenceEngine {
 public:
  InfluenceEngine(const model::HPModel& model, const dataio::Dataset& dataset);

  const model::HPModel& model() const { return model_; }
  std::size_t size() const { return dataset_.participants.size(); }

  // Unperturbed probability of participant i; equals model.predict.
  double probability(std::size_t i) const;

  // Mean probability over subjects with the feature's encoded slot set to v.
  double numeric_at(const std::string& feature, double v, std::span<const std::size_t> subjects) const;
  double categorical_at(const std::string& feature, const std::string& category,
                        std::span<const std::size_t> subjects) const;
  // All axes set to v on [start, start + W).
  double motion_at(std::size_t start, std::size_t W, double v, std::span<const std::size_t> subjects) const;

  InfluenceCurve numeric(const std::string& feature, std::span<const std::size_t> subjects, Level level,
                         int steps = kInfluenceSteps) const;
  InfluenceCurve categorical(const std::string& feature, std::span<const std::size_t> subjects,
                             Level level) const;
  InfluenceCurve motion_window(std::size_t start, std::size_t W, std::span<const std::size_t> subjects,
                               Level level, int steps = kInfluenceSteps) const;

 private:
  std::size_t numeric_slot(const std::string& feature) const;
  std::pair<std::size_t, std::size_t> categorical_block(const std::string& feature,
                                                        const std::string& category) const;
  void check_subjects(std::span<const std::size_t> subjects) const;
  double with_context(std::size_t i, std::span<const double> context) const;

  const model::HPModel& model_;
  const dataio::Dataset& dataset_;
  std::vector<Eigen::VectorXd> motion_embeddings_;
  std::vector<double> probabilities_;
};

// Convenience wrappers that build a throwaway engine.
InfluenceCurve influence_numeric(const model::HPModel& model, const dataio::Dataset& dataset,
                                 const std::string& feature, std::span<const std::size_t> subjects,
                                 Level level, int steps = kInfluenceSteps);
InfluenceCurve influence_categorical(const model::HPModel& model, const dataio::Dataset& dataset,
                                     const std::string& feature, std::span<const std::size_t> subjects,
                                     Level level);
InfluenceCurve influence_motion_window(const model::HPModel& model, const dataio::Dataset& dataset,
                                       std::size_t start, std::size_t W, std::span<const std::size_t> subjects,
                                       Level level, int steps = kInfluenceSteps);

}  // namespace healthprism::interpret
