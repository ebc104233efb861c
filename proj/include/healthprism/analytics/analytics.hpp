#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "healthprism/dataio/records.hpp"

namespace healthprism::analytics {

// ---- correlation ----

struct CorrelationCell {
  std::size_t i = 0;
  std::size_t j = 0;
  // Both empty when either feature is constant.
  std::optional<double> rho;
  std::optional<double> p_value;
};

struct CorrelationMatrix {
  std::vector<std::string> features;
  std::vector<CorrelationCell> cells;  // row-major, features.size()^2

  const CorrelationCell& at(std::size_t i, std::size_t j) const { return cells[i * features.size() + j]; }
  nlohmann::json to_json() const;
};

// 1-based ranks, ties share their average rank.
std::vector<double> average_ranks(std::span<const double> values);

double pearson(std::span<const double> x, std::span<const double> y);

struct Spearman {
  double rho = 0.0;
  double p_value = 0.0;
};

// Empty when x or y is constant. Two-sided p from Student's t with n-2
// degrees of freedom.
std::optional<Spearman> spearman(std::span<const double> x, std::span<const double> y);

CorrelationMatrix spearman_matrix(const std::vector<std::string>& names,
                                  const std::vector<std::vector<double>>& columns);
// Over the completed raw answers of the given numeric features.
CorrelationMatrix spearman_matrix(const dataio::Dataset& dataset, const std::vector<std::string>& feature_ids);

struct PairEntry {
  std::size_t i = 0;
  std::size_t j = 0;
  double rho = 0.0;
  double p_value = 0.0;
  bool pinned = false;
};

// Pinned pairs first (given order, duplicates dropped), then the n
// strongest remaining pairs i < j by |rho| with (i, j) tie order.
// Not-applicable cells never rank.
std::vector<PairEntry> top_pairs(const CorrelationMatrix& matrix, std::size_t n,
                                 std::span<const std::pair<std::size_t, std::size_t>> pins = {});

// ---- profile scores ----

// values in the fixed axis order MVPA, PHYF, VVAS, PSYF, RESI, CONN,
// restricted to the selected indicators.
double profile_score(std::span<const double> values);

// Min-max over the group; degenerate groups map to 0.5.
std::vector<double> normalize_scores(std::span<const double> scores);

struct Divisions {
  std::vector<int> division;  // 1..5 per score
  std::array<std::size_t, 5> counts{};
  double mean = 0.0;
  double sd = 0.0;  // population form
};

Divisions divide_3sigma(std::span<const double> scores);

// ---- similarity graph ----

struct GraphNode {
  std::string id;
  std::vector<double> profile;
  double raw_area = 0.0;
  double score = 0.0;  // normalized within the graph
  int division = 1;
};

struct GraphEdge {
  std::size_t a = 0;  // a < b, node indices
  std::size_t b = 0;
  double distance = 0.0;
};

struct ProfileGraph {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;  // sorted by (a, b)
  std::array<std::size_t, 5> division_counts{};

  nlohmann::json to_json() const;
};

inline constexpr std::size_t kGraphNeighbors = 10;

// Each node's k nearest by Euclidean distance (ties to the smaller id);
// the edge set is the undirected union.
std::vector<std::vector<std::size_t>> nearest_neighbors(const std::vector<std::string>& ids,
                                                        const std::vector<std::vector<double>>& profiles,
                                                        std::size_t k);

ProfileGraph build_similarity_graph(const std::vector<std::string>& ids,
                                    const std::vector<std::vector<double>>& profiles,
                                    std::size_t k = kGraphNeighbors);

// ---- group filters and summaries ----

struct GroupFilter {
  std::vector<dataio::Gender> genders;       // empty = all
  std::vector<dataio::AgeGroup> age_groups;  // empty = all
  std::vector<Indicator> indicators;         // nonempty, kept in axis order

  void validate() const;
  bool admits(const dataio::Participant& p) const;
};

std::vector<std::size_t> select(const dataio::Dataset& dataset, const GroupFilter& filter);

struct SankeyFlow {
  std::string source;  // gender
  std::string target;  // learning mode
  std::size_t count = 0;
};

// Nonzero (gender, learning_mode) counts in enum order.
std::vector<SankeyFlow> sankey_aggregate(std::span<const dataio::Participant* const> participants);

struct MotionSummary {
  std::size_t window = 0;
  std::size_t from = 0;
  std::size_t to = 0;
  std::vector<std::size_t> bucket_start;
  std::array<std::vector<double>, kMotionAxes> axes;
  std::vector<double> magnitude;

  nlohmann::json to_json() const;
};

// Group mean per slot, then per W-slot bucket over [from, to); the last
// bucket may be shorter.
MotionSummary motion_summary(std::span<const dataio::Participant* const> participants, std::size_t window,
                             std::size_t from = 0, std::size_t to = kWeekMinutes);

struct ContextSeries {
  std::string name;
  std::vector<double> means;  // one per feature
};

struct ContextSummary {
  std::vector<std::string> features;
  std::vector<std::string> ids;
  std::vector<std::vector<double>> values;  // [participant][feature], scaled to [0, 1]
  std::vector<ContextSeries> groups;        // requested groups, then "all"

  nlohmann::json to_json() const;
};

// Scaled value of one feature for one participant: the encoded slot for
// numeric features, category index / (categories - 1) for categorical ones.
double scaled_feature(const dataio::Dataset& dataset, const dataio::Participant& p, std::size_t feature);

ContextSummary group_context_summary(const dataio::Dataset& dataset, const std::vector<std::string>& feature_ids,
                                     std::span<const std::size_t> members,
                                     const std::vector<std::pair<std::string, std::vector<std::size_t>>>& groups);

}  // namespace healthprism::analytics
