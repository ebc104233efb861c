#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "healthprism/dataio/records.hpp"
#include "healthprism/model/hpmodel.hpp"

namespace healthprism::model {

struct HyperParams {
  double learning_rate = 1e-3;
  double dropout = 0.2;
  double weight_decay = 0.0;

  nlohmann::json to_json() const;
};

struct TrainConfig {
  int epochs = 40;
  int batch_size = 32;
  // Adam, beta1 0.9, beta2 0.999.
  double adam_epsilon = 1e-8;
  // Global gradient-norm clip per step; 0 disables.
  double gradient_clip = 5.0;
  // Learning-rate multiplier for the gate parameters.
  double gate_lr_scale = 30.0;
  // Stop once the epoch training loss fails to improve by min_delta for
  // this many consecutive epochs; 0 disables.
  int early_stopping_patience = 6;
  double min_delta = 1e-4;
  int folds = 5;
  // With a single grid candidate the fold runs decide nothing and are
  // skipped unless this is set.
  bool cv_single_candidate = false;
  double test_fraction = 0.2;
  struct Grid {
    std::vector<double> learning_rate{1e-3, 3e-4};
    std::vector<double> dropout{0.2, 0.5};
    std::vector<double> weight_decay{0.0, 1e-4};
  } grid;
  std::uint64_t seed = 0;

  // Grid candidates in lexicographic (learning_rate, dropout, weight_decay) order.
  std::vector<HyperParams> candidates() const;
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Seeded, stratified by label; each class contributes round(fraction * size)
// test members. Both index lists are sorted.
Split stratified_split(std::span<const std::uint8_t> labels, double test_fraction, std::uint64_t seed);

// fold_of[i] in [0, folds) for every label, classes dealt round-robin
// after a seeded shuffle.
std::vector<int> stratified_folds(std::span<const std::uint8_t> labels, int folds, std::uint64_t seed);

struct GridRow {
  HyperParams params;
  std::vector<double> fold_aucs;
  double mean_auc = 0.0;
};

struct TrainReport {
  Indicator indicator = Indicator::MVPA;
  std::uint64_t seed = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  double positive_weight = 1.0;
  bool cross_validated = false;
  std::vector<GridRow> grid;
  HyperParams chosen;
  std::vector<double> loss_curve;
  int epochs_run = 0;
  double test_auc = 0.0;

  nlohmann::json to_json() const;
};

struct TrainResult {
  HPModel model;
  TrainReport report;
};

using TrainLog = std::function<void(std::string_view)>;

// Fits a freshly initialized network in place. Returns the per-epoch mean
// weighted loss.
std::vector<double> fit(Network& network, std::span<const SampleView> samples,
                        std::span<const std::uint8_t> labels, const HyperParams& hp,
                        const TrainConfig& config, std::uint64_t seed, const TrainLog& log = {});

TrainResult train(const dataio::Dataset& dataset, Indicator indicator, const TrainConfig& config,
                  const ModelConfig& model_config, const TrainLog& log = {});

std::vector<std::uint8_t> labels_of(const dataio::Dataset& dataset, Indicator indicator);

}  // namespace healthprism::model
