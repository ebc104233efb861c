#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "healthprism/dataio/records.hpp"

namespace healthprism::dataio {

// (v - min) / (max - min) clamped to [0, 1]; a degenerate range maps to 0.5.
double minmax_scale(double value, double min, double max);
std::vector<double> minmax_scale(std::span<const double> values, double min, double max);

// [female, male] followed by [face-to-face, mixed, online].
std::array<double, 5> one_hot_encode(std::string_view gender, std::string_view learning_mode);

// Encodes one categorical answer against its descriptor.
std::vector<double> one_hot(const FeatureDescriptor& feature, const std::string& category);

// Fills every missing answer from the k nearest records that observed it.
// Distances use min-max-scaled numeric features (categorical mismatch counts
// 1) over the features both records observed, rescaled by
// sqrt(total / shared). Numeric answers take the neighbor mean, categorical
// ones the neighbor mode (ties to the lexicographically smallest label).
std::vector<RawContextRecord> impute_knn(const Schema& schema,
                                         const std::vector<RawContextRecord>& records,
                                         std::size_t k);

struct MinuteSeries {
  std::int64_t first_minute = 0;  // epoch minute of values[0]
  std::vector<std::array<double, 3>> values;
  std::vector<std::uint8_t> covered;
};

MinuteSeries resample_minutes(const RawMotionRecord& record);

// Weekly slot of an epoch minute, Monday 00:00 = 0.
std::size_t weekly_slot(std::int64_t epoch_minute);

MotionPattern extract_weekly_pattern(const MinuteSeries& series);

ContextPattern build_context_pattern(const Schema& schema, const RawContextRecord& record,
                                     const NormalizationStats& stats);

// Min/max over the observed values of every numeric feature.
NormalizationStats compute_normalization_stats(const Schema& schema,
                                               const std::vector<RawContextRecord>& records);

struct PreprocessOptions {
  std::size_t knn_k = 5;
};

struct PreprocessReport {
  std::size_t participants = 0;
  std::size_t knn_k = 0;
  std::size_t imputed_values = 0;
  std::map<std::string, std::size_t> imputed_per_feature;
  double mean_motion_coverage = 0.0;
  std::size_t context_width = 0;

  nlohmann::json to_json() const;
};

struct PreprocessResult {
  Dataset dataset;
  PreprocessReport report;
};

// Imputation, scaling, encoding and weekly motion extraction in one pass.
// The schema must carry numeric "age" and categorical "gender" and
// "learning_mode" features.
PreprocessResult preprocess(const RawDataset& raw, const PreprocessOptions& options = {});

}  // namespace healthprism::dataio
