#include "healthprism/dataio/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace healthprism::dataio {

double minmax_scale(double value, double min, double max) {
  if (max == min) return 0.5;
  return std::clamp((value - min) / (max - min), 0.0, 1.0);
}

std::vector<double> minmax_scale(std::span<const double> values, double min, double max) {
  std::vector<double> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(),
                 [&](double v) { return minmax_scale(v, min, max); });
  return out;
}

std::array<double, 5> one_hot_encode(std::string_view gender, std::string_view learning_mode) {
  const auto g = parse_gender(gender);
  if (!g) fail(ErrorCode::encoding, "unknown gender '" + std::string(gender) + "'");
  const auto m = parse_learning_mode(learning_mode);
  if (!m) fail(ErrorCode::encoding, "unknown learning mode '" + std::string(learning_mode) + "'");
  std::array<double, 5> out{};
  out[static_cast<std::size_t>(*g)] = 1.0;
  out[2 + static_cast<std::size_t>(*m)] = 1.0;
  return out;
}

std::vector<double> one_hot(const FeatureDescriptor& feature, const std::string& category) {
  std::vector<double> out(feature.categories.size(), 0.0);
  const auto it = std::find(feature.categories.begin(), feature.categories.end(), category);
  if (it == feature.categories.end()) {
    fail(ErrorCode::encoding,
         "unknown category '" + category + "' for feature '" + feature.id + "'");
  }
  out[static_cast<std::size_t>(it - feature.categories.begin())] = 1.0;
  return out;
}

namespace {

bool is_numeric(const FeatureDescriptor& f) { return f.kind == FeatureKind::numeric; }

double numeric_of(const ContextValue& v) { return std::get<double>(*v); }

}  // namespace

std::vector<RawContextRecord> impute_knn(const Schema& schema,
                                         const std::vector<RawContextRecord>& records,
                                         std::size_t k) {
  if (k == 0) fail(ErrorCode::argument, "k must be positive");
  const std::size_t n = records.size();
  const std::size_t d = schema.size();
  for (const auto& r : records) {
    if (r.values.size() != d) {
      fail(ErrorCode::integrity, "record '" + r.participant_id + "' is not aligned with the schema");
    }
  }
  // Range of every numeric feature over observed answers, for distance scaling.
  std::vector<double> lo(d, std::numeric_limits<double>::infinity());
  std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
  std::vector<std::size_t> observed(d, 0);
  for (const auto& r : records) {
    for (std::size_t j = 0; j < d; ++j) {
      if (!r.values[j]) continue;
      ++observed[j];
      if (is_numeric(schema[j])) {
        lo[j] = std::min(lo[j], numeric_of(r.values[j]));
        hi[j] = std::max(hi[j], numeric_of(r.values[j]));
      }
    }
  }
  bool any_missing = false;
  for (std::size_t j = 0; j < d && n > 0; ++j) {
    if (observed[j] < n) any_missing = true;
    if (observed[j] == 0) {
      fail(ErrorCode::imputation, "feature '" + schema[j].id + "' is missing in every record");
    }
  }
  std::vector<RawContextRecord> out = records;
  if (!any_missing) return out;

  auto distance = [&](const RawContextRecord& a, const RawContextRecord& b) {
    double sum = 0.0;
    std::size_t shared = 0;
    for (std::size_t j = 0; j < d; ++j) {
      if (!a.values[j] || !b.values[j]) continue;
      ++shared;
      if (is_numeric(schema[j])) {
        const double diff = minmax_scale(numeric_of(a.values[j]), lo[j], hi[j]) -
                            minmax_scale(numeric_of(b.values[j]), lo[j], hi[j]);
        sum += diff * diff;
      } else if (std::get<std::string>(*a.values[j]) != std::get<std::string>(*b.values[j])) {
        sum += 1.0;
      }
    }
    if (shared == 0) return std::numeric_limits<double>::infinity();
    return std::sqrt(sum * static_cast<double>(d) / static_cast<double>(shared));
  };

  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = records[i];
    if (std::all_of(rec.values.begin(), rec.values.end(), [](const auto& v) { return v.has_value(); })) {
      continue;
    }
    order.clear();
    for (std::size_t other = 0; other < n; ++other) {
      if (other != i) order.emplace_back(distance(rec, records[other]), other);
    }
    std::sort(order.begin(), order.end());
    for (std::size_t j = 0; j < d; ++j) {
      if (rec.values[j]) continue;
      std::vector<std::size_t> neighbors;
      for (const auto& [dist, other] : order) {
        if (records[other].values[j]) neighbors.push_back(other);
        if (neighbors.size() == k) break;
      }
      if (is_numeric(schema[j])) {
        double sum = 0.0;
        for (std::size_t other : neighbors) sum += numeric_of(records[other].values[j]);
        out[i].values[j] = sum / static_cast<double>(neighbors.size());
      } else {
        std::map<std::string, std::size_t> votes;
        for (std::size_t other : neighbors) ++votes[std::get<std::string>(*records[other].values[j])];
        // std::map iterates in lexicographic order, so the first maximum wins ties.
        auto best = votes.begin();
        for (auto it = votes.begin(); it != votes.end(); ++it) {
          if (it->second > best->second) best = it;
        }
        out[i].values[j] = best->first;
      }
    }
  }
  return out;
}

MinuteSeries resample_minutes(const RawMotionRecord& record) {
  MinuteSeries series;
  if (record.samples.empty()) return series;
  auto minute_of = [](std::int64_t ts) {
    return ts >= 0 ? ts / 60 : -((-ts + 59) / 60);
  };
  series.first_minute = minute_of(record.samples.front().timestamp);
  const std::int64_t last = minute_of(record.samples.back().timestamp);
  const auto span = static_cast<std::size_t>(last - series.first_minute + 1);
  series.values.assign(span, {0.0, 0.0, 0.0});
  series.covered.assign(span, 0);
  std::vector<std::size_t> counts(span, 0);
  for (const auto& s : record.samples) {
    const auto slot = static_cast<std::size_t>(minute_of(s.timestamp) - series.first_minute);
    series.values[slot][0] += s.ax;
    series.values[slot][1] += s.ay;
    series.values[slot][2] += s.az;
    ++counts[slot];
  }
  for (std::size_t m = 0; m < span; ++m) {
    if (counts[m] == 0) continue;
    series.covered[m] = 1;
    for (auto& axis : series.values[m]) axis /= static_cast<double>(counts[m]);
  }
  return series;
}

std::size_t weekly_slot(std::int64_t epoch_minute) {
  // 1970-01-01 was a Thursday, three days after the Monday origin.
  constexpr std::int64_t kThursdayOffset = 3 * 24 * 60;
  const std::int64_t week = static_cast<std::int64_t>(kWeekMinutes);
  return static_cast<std::size_t>((((epoch_minute + kThursdayOffset) % week) + week) % week);
}

MotionPattern extract_weekly_pattern(const MinuteSeries& series) {
  std::vector<double> sums(kMotionAxes * kWeekMinutes, 0.0);
  std::vector<std::size_t> counts(kWeekMinutes, 0);
  for (std::size_t m = 0; m < series.values.size(); ++m) {
    if (!series.covered[m]) continue;
    const std::size_t slot = weekly_slot(series.first_minute + static_cast<std::int64_t>(m));
    ++counts[slot];
    for (std::size_t a = 0; a < kMotionAxes; ++a) sums[a * kWeekMinutes + slot] += series.values[m][a];
  }
  MotionPattern pattern;
  pattern.values.assign(kMotionAxes * kWeekMinutes, 0.0f);
  pattern.coverage.assign(kWeekMinutes, 0);
  for (std::size_t s = 0; s < kWeekMinutes; ++s) pattern.coverage[s] = counts[s] > 0 ? 1 : 0;
  for (std::size_t a = 0; a < kMotionAxes; ++a) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < kWeekMinutes; ++s) {
      if (counts[s] == 0) continue;
      double& v = sums[a * kWeekMinutes + s];
      v /= static_cast<double>(counts[s]);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    for (std::size_t s = 0; s < kWeekMinutes; ++s) {
      if (counts[s] == 0) continue;
      pattern.values[a * kWeekMinutes + s] =
          static_cast<float>(minmax_scale(sums[a * kWeekMinutes + s], lo, hi));
    }
  }
  return pattern;
}

NormalizationStats compute_normalization_stats(const Schema& schema,
                                               const std::vector<RawContextRecord>& records) {
  NormalizationStats stats;
  for (std::size_t j : schema.numeric()) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& r : records) {
      if (!r.values[j]) continue;
      lo = std::min(lo, numeric_of(r.values[j]));
      hi = std::max(hi, numeric_of(r.values[j]));
    }
    if (lo <= hi) stats[schema[j].id] = FeatureRange{lo, hi};
  }
  return stats;
}

ContextPattern build_context_pattern(const Schema& schema, const RawContextRecord& record,
                                     const NormalizationStats& stats) {
  if (record.values.size() != schema.size()) {
    fail(ErrorCode::integrity, "record '" + record.participant_id + "' has " +
                                   std::to_string(record.values.size()) + " values, schema has " +
                                   std::to_string(schema.size()));
  }
  ContextPattern pattern;
  pattern.values.reserve(schema.encoded_width());
  for (std::size_t j : schema.numeric()) {
    if (!record.values[j]) {
      fail(ErrorCode::integrity, "record '" + record.participant_id + "' is missing '" +
                                     schema[j].id + "' after imputation");
    }
    const auto it = stats.find(schema[j].id);
    if (it == stats.end()) {
      fail(ErrorCode::integrity, "no normalization stats for '" + schema[j].id + "'");
    }
    pattern.values.push_back(minmax_scale(numeric_of(record.values[j]), it->second.min, it->second.max));
  }
  for (std::size_t j : schema.categorical()) {
    if (!record.values[j]) {
      fail(ErrorCode::integrity, "record '" + record.participant_id + "' is missing '" +
                                     schema[j].id + "' after imputation");
    }
    const auto block = one_hot(schema[j], std::get<std::string>(*record.values[j]));
    pattern.values.insert(pattern.values.end(), block.begin(), block.end());
  }
  return pattern;
}

nlohmann::json PreprocessReport::to_json() const {
  return {{"participants", participants},
          {"knn_k", knn_k},
          {"imputed_values", imputed_values},
          {"imputed_per_feature", imputed_per_feature},
          {"mean_motion_coverage", mean_motion_coverage},
          {"context_width", context_width}};
}

PreprocessResult preprocess(const RawDataset& raw, const PreprocessOptions& options) {
  const Schema& schema = raw.schema;
  const auto gender_idx = schema.find(kGenderFeature);
  const auto age_idx = schema.find(kAgeFeature);
  const auto mode_idx = schema.find(kLearningModeFeature);
  if (!gender_idx || !age_idx || !mode_idx || schema[*gender_idx].kind != FeatureKind::categorical ||
      schema[*age_idx].kind != FeatureKind::numeric ||
      schema[*mode_idx].kind != FeatureKind::categorical) {
    fail(ErrorCode::schema,
         "schema needs numeric 'age' and categorical 'gender' and 'learning_mode' features");
  }
  if (raw.motion.size() != raw.context.size() || raw.labels.size() != raw.context.size()) {
    fail(ErrorCode::integrity, "context, motion and label record counts differ");
  }

  PreprocessResult result;
  auto& report = result.report;
  report.participants = raw.context.size();
  report.knn_k = options.knn_k;
  report.context_width = schema.encoded_width();

  const auto completed = impute_knn(schema, raw.context, options.knn_k);
  Dataset& ds = result.dataset;
  ds.schema = schema;
  ds.normalization_stats = compute_normalization_stats(schema, completed);

  double coverage_sum = 0.0;
  ds.participants.reserve(raw.context.size());
  for (std::size_t i = 0; i < raw.context.size(); ++i) {
    const auto& rec = completed[i];
    if (raw.motion[i].participant_id != rec.participant_id) {
      fail(ErrorCode::integrity, "motion record order does not match context for '" +
                                     rec.participant_id + "'");
    }
    Participant p;
    p.id = rec.participant_id;
    p.imputed_mask.assign(schema.size(), 0);
    for (std::size_t j = 0; j < schema.size(); ++j) {
      if (!raw.context[i].values[j]) {
        p.imputed_mask[j] = 1;
        ++report.imputed_values;
        ++report.imputed_per_feature[schema[j].id];
      }
      p.completed.push_back(*rec.values[j]);
    }
    const auto gender = parse_gender(std::get<std::string>(*rec.values[*gender_idx]));
    const auto mode = parse_learning_mode(std::get<std::string>(*rec.values[*mode_idx]));
    if (!gender || !mode) {
      fail(ErrorCode::encoding, "participant '" + p.id + "' has an unknown gender or learning mode");
    }
    p.gender = *gender;
    p.learning_mode = *mode;
    p.age = static_cast<int>(std::lround(std::get<double>(*rec.values[*age_idx])));
    if (p.age < 6 || p.age > 18) {
      fail(ErrorCode::integrity, "participant '" + p.id + "' has age " + std::to_string(p.age) +
                                     " outside [6, 18]");
    }
    p.age_group = age_group_of(p.age);
    p.context = build_context_pattern(schema, rec, ds.normalization_stats);
    if (raw.motion[i].samples.empty()) {
      fail(ErrorCode::integrity, "participant '" + p.id + "' has no motion samples");
    }
    p.motion = extract_weekly_pattern(resample_minutes(raw.motion[i]));
    coverage_sum += static_cast<double>(std::accumulate(p.motion.coverage.begin(),
                                                        p.motion.coverage.end(), std::size_t{0})) /
                    static_cast<double>(kWeekMinutes);
    p.labels = raw.labels[i];
    ds.participants.push_back(std::move(p));
  }
  report.mean_motion_coverage =
      ds.participants.empty() ? 0.0 : coverage_sum / static_cast<double>(ds.participants.size());
  return result;
}

}  // namespace healthprism::dataio
