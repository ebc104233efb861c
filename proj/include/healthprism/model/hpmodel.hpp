#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "healthprism/common.hpp"
#include "healthprism/dataio/records.hpp"
#include "healthprism/model/network.hpp"

namespace healthprism::model {

// One trained network per health indicator.
struct HPModel {
  Indicator indicator = Indicator::MVPA;
  Network network;
  bool trained = false;
  std::uint64_t training_seed = 0;
  // Raw-probability extremes over the population the model was scored on,
  // {min, max}; set after training.
  std::optional<std::array<double, 2>> population_range;
  // Free-form provenance (CLI flags, train summary).
  nlohmann::json metadata = nlohmann::json::object();

  explicit HPModel(ModelConfig config, Indicator ind = Indicator::MVPA)
      : indicator(ind), network(std::move(config)) {}

  const ModelConfig& config() const { return network.config(); }
  void require_trained() const;
  double predict(const dataio::Participant& p) const;
};

SampleView sample_of(const dataio::Participant& p);

// Round every parameter to the nearest float so the stored artifact
// reproduces the in-memory model exactly.
void quantize_to_float(Network& network);

// Binary container: "HPMODEL1", u64 header length, JSON header, float32
// little-endian parameters, then the 64-char SHA-256 hex of everything
// before it.
std::string serialize_model(const HPModel& model);
HPModel deserialize_model(std::string_view bytes);
// SHA-256 recorded in (and verified against) an artifact.
std::string artifact_hash(std::string_view bytes);

void save_model(const std::string& path, const HPModel& model);
HPModel load_model(const std::string& path);

std::string artifact_name(Indicator ind);

struct PredictionSet {
  std::vector<std::string> ids;
  // Indexed [indicator][participant].
  std::array<std::vector<double>, kIndicatorCount> probability;
  std::array<std::vector<double>, kIndicatorCount> normalized;

  nlohmann::json to_json() const;
};

// Min-max over the population; all-equal input maps to 0.5.
std::vector<double> minmax_normalize(std::span<const double> values);

// models[i] predicts kIndicators[i].
PredictionSet predict_and_normalize(std::span<const HPModel* const> models,
                                    const dataio::Dataset& dataset);

}  // namespace healthprism::model
