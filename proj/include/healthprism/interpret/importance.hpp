#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "healthprism/dataio/records.hpp"
#include "healthprism/model/hpmodel.hpp"

namespace healthprism::interpret {

struct ImportanceVector {
  // Gate output per encoded context position.
  std::vector<double> context;
};

struct MotionImportanceSeries {
  // Channel-major, kMotionAxes x kWeekMinutes.
  std::vector<double> per_axis;
  // sqrt(mean over axes of squares), per slot.
  std::vector<double> combined;
};

// Either part is empty when the model lacks that stream.
struct PersonalImportance {
  ImportanceVector context;
  MotionImportanceSeries motion;
};

PersonalImportance personal_importance(const model::HPModel& model, const dataio::Participant& p);

// combined[t] = sqrt(sum_c x[c][t]^2 / channels).
std::vector<double> rms_combine(std::span<const double> per_axis, std::size_t channels);

// Encoded positions back to raw schema features; one-hot blocks average.
std::vector<double> feature_importance(const dataio::Schema& schema, std::span<const double> encoded);

// Element-wise mean over members (indices into all).
PersonalImportance aggregate_importance(std::span<const PersonalImportance> all,
                                        std::span<const std::size_t> members);
PersonalImportance aggregate_importance(std::span<const PersonalImportance> all);

// Same result as aggregate_importance over personal_importance of every
// member, without holding the per-participant series.
PersonalImportance aggregate_importance(const model::HPModel& model, const dataio::Dataset& dataset,
                                        std::span<const std::size_t> members);

struct WindowHit {
  std::size_t start = 0;
  double mean = 0.0;

  bool operator==(const WindowHit&) const = default;
};

// Maximal-mean window of W consecutive slots, smallest start on ties. O(T).
WindowHit top_window(std::span<const double> series, std::size_t W);

// Greedy disjoint windows: each round takes the best window of W original
// slots that overlaps no earlier pick. Stops early when none fits.
std::vector<WindowHit> rank_windows(std::span<const double> series, std::size_t W, std::size_t count);

struct RankedEntry {
  enum class Kind { context, motion };
  Kind kind = Kind::context;
  std::string feature;    // context feature id
  std::size_t start = 0;  // motion window
  std::size_t window = 0;
  double score = 0.0;
  double share = 0.0;  // percent

  nlohmann::json to_json() const;
};

struct RankedFeatureSet {
  Indicator indicator = Indicator::MVPA;
  std::size_t window = 0;
  std::vector<RankedEntry> entries;

  nlohmann::json to_json() const;
};

inline constexpr std::size_t kMotionCandidates = 10;

// Pool = raw-feature importances plus the ranked windows; keeps the k best
// (ties: features in schema order before windows in rank order) and
// expresses each as a percentage of the kept total.
RankedFeatureSet top_k_features(const dataio::Schema& schema, std::span<const double> features,
                                std::span<const WindowHit> windows, Indicator indicator,
                                std::size_t window, std::size_t k = 10);

// top_k_features over an aggregate: raw-feature importances plus the
// kMotionCandidates best disjoint windows of width W.
RankedFeatureSet rank_importance(const dataio::Schema& schema, const PersonalImportance& aggregate,
                                 Indicator indicator, std::size_t window, std::size_t k = 10);

// Valid slider widths: 5..120 in steps of 5.
bool valid_window(std::size_t W);

}  // namespace healthprism::interpret
