#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "healthprism/dataio/records.hpp"
#include "healthprism/dataio/synth.hpp"
#include "healthprism/model/hpmodel.hpp"
#include "healthprism/model/train.hpp"
#include "healthprism/service/service.hpp"

namespace hp_test {

namespace hp = healthprism;

// Small real-shaped network: context 50, motion 3 x 10080.
hp::model::ModelConfig small_model_config();

// Context 8, motion 3 x 32, every width <= 8.
hp::model::ModelConfig miniature_config();

// One hyperparameter candidate, no cross-validation.
hp::model::TrainConfig quick_train_config(int epochs);

hp::dataio::Dataset synth_dataset(std::size_t n, std::uint64_t seed);

struct Cohort {
  hp::dataio::Dataset dataset;
  std::vector<hp::model::HPModel> models;  // kIndicators order
  std::filesystem::path dir;               // processed.tar + model_<IND>.hpm
};

// Built once per process: 60 participants, six briefly trained small models.
const Cohort& tiny_cohort();

struct GroupGradientError {
  std::string group;
  double relative_error = 0.0;
  double analytic_norm = 0.0;
};

// Analytic vs central-difference gradient of the weighted BCE loss summed
// over a few random samples, per parameter group.
std::vector<GroupGradientError> gradient_check(const hp::model::ModelConfig& config, std::uint64_t seed,
                                               double step = 1e-5);

struct RouteCase {
  std::string path;
  hp::service::Query query;
  // Top-level keys the body must carry besides "v".
  std::vector<std::string> keys;
};

// One request per route, parameterized from the dataset's first participants.
std::vector<RouteCase> route_suite(const hp::dataio::Dataset& dataset);

// Empty when the body is a JSON object with "v": 1, every listed key, and
// only finite numbers; otherwise a description of the first problem.
std::string check_body(const RouteCase& route, const std::string& body);

std::filesystem::path scratch_dir(const std::string& name);

}  // namespace hp_test
