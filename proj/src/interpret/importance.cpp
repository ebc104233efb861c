#include "healthprism/interpret/importance.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "healthprism/dataio/schema.hpp"

namespace healthprism::interpret {

PersonalImportance personal_importance(const model::HPModel& model, const dataio::Participant& p) {
  model.require_trained();
  const auto& cfg = model.config();
  if (!cfg.use_gates) {
    fail(ErrorCode::state, "model for " + std::string(to_string(model.indicator)) +
                               " was trained without gates and has no intrinsic importance");
  }
  PersonalImportance out;
  if (cfg.uses_context()) {
    if (p.context.values.size() != static_cast<std::size_t>(cfg.context_length)) {
      fail(ErrorCode::shape, "participant " + p.id + " context has the wrong length");
    }
    const model::RowMatrix x =
        Eigen::Map<const model::RowMatrix>(p.context.values.data(), 1, cfg.context_length);
    const auto g = model::gate_apply(model.network.context_gate(), x);
    out.context.context.assign(g.weights.data(), g.weights.data() + g.weights.size());
  }
  if (cfg.uses_motion()) {
    const auto T = static_cast<long>(cfg.motion_length);
    const auto C = static_cast<long>(cfg.motion_channels);
    if (p.motion.values.size() != static_cast<std::size_t>(C * T)) {
      fail(ErrorCode::shape, "participant " + p.id + " motion has the wrong size");
    }
    using FloatRows = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const model::RowMatrix x = Eigen::Map<const FloatRows>(p.motion.values.data(), C, T).cast<double>();
    const auto g = model::gate_apply(model.network.motion_gate(), x);
    out.motion.per_axis.assign(g.weights.data(), g.weights.data() + g.weights.size());
    out.motion.combined = rms_combine(out.motion.per_axis, static_cast<std::size_t>(C));
  }
  return out;
}

std::vector<double> rms_combine(std::span<const double> per_axis, std::size_t channels) {
  if (channels == 0 || per_axis.size() % channels != 0) {
    fail(ErrorCode::shape, "per-axis series does not split into " + std::to_string(channels) + " channels");
  }
  const std::size_t T = per_axis.size() / channels;
  std::vector<double> out(T, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t t = 0; t < T; ++t) out[t] += per_axis[c * T + t] * per_axis[c * T + t];
  }
  for (auto& v : out) v = std::sqrt(v / static_cast<double>(channels));
  return out;
}

std::vector<double> feature_importance(const dataio::Schema& schema, std::span<const double> encoded) {
  if (encoded.size() != schema.encoded_width()) {
    fail(ErrorCode::shape, "importance vector has " + std::to_string(encoded.size()) +
                               " entries, schema encodes " + std::to_string(schema.encoded_width()));
  }
  const auto owner = schema.encoded_owner();
  std::vector<double> sum(schema.size(), 0.0);
  std::vector<std::size_t> count(schema.size(), 0);
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    sum[owner[i]] += encoded[i];
    ++count[owner[i]];
  }
  for (std::size_t f = 0; f < sum.size(); ++f) sum[f] /= static_cast<double>(count[f]);
  return sum;
}

namespace {

void accumulate(std::vector<double>& acc, const std::vector<double>& v) {
  if (acc.empty()) acc.assign(v.size(), 0.0);
  if (acc.size() != v.size()) fail(ErrorCode::shape, "importance vectors differ in shape");
  for (std::size_t i = 0; i < v.size(); ++i) acc[i] += v[i];
}

void divide(std::vector<double>& acc, std::size_t n) {
  for (auto& v : acc) v /= static_cast<double>(n);
}

}  // namespace

PersonalImportance aggregate_importance(std::span<const PersonalImportance> all,
                                        std::span<const std::size_t> members) {
  if (members.empty()) fail(ErrorCode::argument, "cannot aggregate importance over an empty group");
  PersonalImportance out;
  for (auto m : members) {
    if (m >= all.size()) fail(ErrorCode::argument, "group member index out of range");
    accumulate(out.context.context, all[m].context.context);
    accumulate(out.motion.per_axis, all[m].motion.per_axis);
    accumulate(out.motion.combined, all[m].motion.combined);
  }
  divide(out.context.context, members.size());
  divide(out.motion.per_axis, members.size());
  divide(out.motion.combined, members.size());
  return out;
}

PersonalImportance aggregate_importance(std::span<const PersonalImportance> all) {
  std::vector<std::size_t> members(all.size());
  for (std::size_t i = 0; i < members.size(); ++i) members[i] = i;
  return aggregate_importance(all, members);
}

PersonalImportance aggregate_importance(const model::HPModel& model, const dataio::Dataset& dataset,
                                        std::span<const std::size_t> members) {
  if (members.empty()) fail(ErrorCode::argument, "cannot aggregate importance over an empty group");
  PersonalImportance out;
  for (auto m : members) {
    if (m >= dataset.participants.size()) fail(ErrorCode::argument, "group member index out of range");
    const auto imp = personal_importance(model, dataset.participants[m]);
    accumulate(out.context.context, imp.context.context);
    accumulate(out.motion.per_axis, imp.motion.per_axis);
    accumulate(out.motion.combined, imp.motion.combined);
  }
  divide(out.context.context, members.size());
  divide(out.motion.per_axis, members.size());
  divide(out.motion.combined, members.size());
  return out;
}

namespace {

void check_window(std::size_t T, std::size_t W) {
  if (W == 0 || W > T) {
    fail(ErrorCode::argument, "window length " + std::to_string(W) + " outside [1, " + std::to_string(T) + "]");
  }
}

double window_mean(std::span<const double> series, std::size_t start, std::size_t W) {
  double sum = 0.0;
  for (std::size_t i = start; i < start + W; ++i) sum += series[i];
  return sum / static_cast<double>(W);
}

// Running-sum scan over every start whose W slots are free.
// blocked_prefix[i] counts blocked slots in [0, i).
std::optional<std::size_t> best_start(std::span<const double> series, std::size_t W,
                                      const std::vector<std::size_t>* blocked_prefix) {
  const std::size_t T = series.size();
  long double running = 0.0L;
  for (std::size_t i = 0; i < W; ++i) running += series[i];
  std::optional<std::size_t> best;
  long double best_sum = 0.0L;
  for (std::size_t s = 0;; ++s) {
    const bool free = !blocked_prefix || (*blocked_prefix)[s + W] == (*blocked_prefix)[s];
    if (free && (!best || running > best_sum)) {
      best = s;
      best_sum = running;
    }
    if (s + W >= T) break;
    running += static_cast<long double>(series[s + W]) - static_cast<long double>(series[s]);
  }
  return best;
}

}  // namespace

WindowHit top_window(std::span<const double> series, std::size_t W) {
  check_window(series.size(), W);
  const std::size_t s = *best_start(series, W, nullptr);
  return {s, window_mean(series, s, W)};
}

std::vector<WindowHit> rank_windows(std::span<const double> series, std::size_t W, std::size_t count) {
  check_window(series.size(), W);
  std::vector<WindowHit> out;
  std::vector<std::uint8_t> blocked(series.size(), 0);
  std::vector<std::size_t> prefix(series.size() + 1, 0);
  while (out.size() < count) {
    for (std::size_t i = 0; i < series.size(); ++i) prefix[i + 1] = prefix[i] + blocked[i];
    const auto s = best_start(series, W, &prefix);
    if (!s) break;
    out.push_back({*s, window_mean(series, *s, W)});
    std::fill_n(blocked.begin() + static_cast<long>(*s), W, 1);
  }
  return out;
}

nlohmann::json RankedEntry::to_json() const {
  nlohmann::json j = {{"kind", kind == Kind::context ? "context" : "motion"}, {"score", score}, {"share", share}};
  if (kind == Kind::context) {
    j["feature"] = feature;
  } else {
    j["start"] = start;
    j["window"] = window;
  }
  return j;
}

nlohmann::json RankedFeatureSet::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& e : entries) list.push_back(e.to_json());
  return {{"indicator", std::string(to_string(indicator))}, {"window", window}, {"entries", list}};
}

RankedFeatureSet top_k_features(const dataio::Schema& schema, std::span<const double> features,
                                std::span<const WindowHit> windows, Indicator indicator,
                                std::size_t window, std::size_t k) {
  if (!features.empty() && features.size() != schema.size()) {
    fail(ErrorCode::shape, "expected " + std::to_string(schema.size()) + " feature importances, got " +
                               std::to_string(features.size()));
  }
  std::vector<RankedEntry> pool;
  for (std::size_t f = 0; f < features.size(); ++f) {
    pool.push_back({RankedEntry::Kind::context, schema[f].id, 0, 0, features[f], 0.0});
  }
  for (std::size_t w = 0; w < std::min(windows.size(), kMotionCandidates); ++w) {
    pool.push_back({RankedEntry::Kind::motion, "", windows[w].start, window, windows[w].mean, 0.0});
  }
  std::stable_sort(pool.begin(), pool.end(),
                   [](const RankedEntry& a, const RankedEntry& b) { return a.score > b.score; });
  pool.resize(std::min(pool.size(), k));
  double total = 0.0;
  for (const auto& e : pool) total += e.score;
  for (auto& e : pool) {
    e.share = total > 0.0 ? e.score / total * 100.0 : 100.0 / static_cast<double>(pool.size());
  }
  return RankedFeatureSet{indicator, window, std::move(pool)};
}

RankedFeatureSet rank_importance(const dataio::Schema& schema, const PersonalImportance& aggregate,
                                 Indicator indicator, std::size_t window, std::size_t k) {
  std::vector<double> features;
  if (!aggregate.context.context.empty()) features = feature_importance(schema, aggregate.context.context);
  std::vector<WindowHit> windows;
  if (!aggregate.motion.combined.empty()) {
    windows = rank_windows(aggregate.motion.combined, window, kMotionCandidates);
  }
  return top_k_features(schema, features, windows, indicator, window, k);
}

bool valid_window(std::size_t W) { return W >= 5 && W <= 120 && W % 5 == 0; }

}  // namespace healthprism::interpret
