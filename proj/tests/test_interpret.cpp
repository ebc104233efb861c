#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "healthprism/dataio/schema.hpp"
#include "healthprism/interpret/importance.hpp"
#include "healthprism/interpret/influence.hpp"
#include "support.hpp"

using namespace healthprism;
using namespace healthprism::interpret;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::io;
}

double brute_mean(const std::vector<double>& x, std::size_t s, std::size_t W) {
  double sum = 0.0;
  for (std::size_t i = s; i < s + W; ++i) sum += x[i];
  return sum / static_cast<double>(W);
}

std::vector<WindowHit> brute_rank(const std::vector<double>& x, std::size_t W, std::size_t count) {
  std::vector<WindowHit> out;
  std::vector<bool> used(x.size(), false);
  while (out.size() < count) {
    std::optional<WindowHit> best;
    for (std::size_t s = 0; s + W <= x.size(); ++s) {
      bool free = true;
      for (std::size_t i = s; i < s + W; ++i) free = free && !used[i];
      if (!free) continue;
      const double m = brute_mean(x, s, W);
      if (!best || m > best->mean) best = WindowHit{s, m};
    }
    if (!best) break;
    out.push_back(*best);
    for (std::size_t i = best->start; i < best->start + W; ++i) used[i] = true;
  }
  return out;
}

// Dyadic values keep every window sum exact.
std::vector<double> dyadic_series(std::mt19937_64& rng, std::size_t T) {
  const unsigned levels = 1 + static_cast<unsigned>(rng() % 64);
  std::vector<double> x(T);
  for (auto& v : x) v = static_cast<double>(rng() % levels) / 1024.0;
  return x;
}

std::vector<std::size_t> all_of(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

TEST_CASE("window ranking matches brute force") {
  std::mt19937_64 rng(2024);
  for (int inst = 0; inst < 300; ++inst) {
    const std::size_t T = 1 + rng() % 600;
    const std::size_t W = 1 + rng() % T;
    const std::size_t n = 1 + rng() % 5;
    const auto x = dyadic_series(rng, T);
    const auto top = top_window(x, W);
    const auto oracle = brute_rank(x, W, 1);
    CHECK(top == oracle.front());
    CHECK(rank_windows(x, W, n) == brute_rank(x, W, n));
  }
  const std::vector<double> x{1, 3, 3, 1};
  CHECK(top_window(x, 2) == WindowHit{1, 3.0});
  const std::vector<double> ties{2, 2, 2, 2};
  CHECK(top_window(ties, 2).start == 0);
  CHECK(code_of([&] { top_window(x, 5); }) == ErrorCode::argument);
  CHECK(code_of([&] { top_window(x, 0); }) == ErrorCode::argument);
  // Later windows may not straddle earlier picks.
  const std::vector<double> gap{0, 5, 5, 0, 4, 0};
  const auto r = rank_windows(gap, 2, 3);
  REQUIRE(r.size() == 2);
  CHECK(r[0].start == 1);
  CHECK(r[1].start == 3);
}

TEST_CASE("rank_windows outputs are disjoint and descending") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> x(10080);
  for (auto& v : x) v = u(rng);
  const auto r = rank_windows(x, 60, 10);
  REQUIRE(r.size() == 10);
  for (std::size_t i = 0; i < r.size(); ++i) {
    CHECK(r[i].start + 60 <= x.size());
    if (i > 0) CHECK(r[i].mean <= r[i - 1].mean);
    for (std::size_t j = 0; j < i; ++j) {
      CHECK((r[i].start + 60 <= r[j].start || r[j].start + 60 <= r[i].start));
    }
  }
}

TEST_CASE("valid windows") {
  CHECK(valid_window(5));
  CHECK(valid_window(120));
  CHECK(!valid_window(7));
  CHECK(!valid_window(0));
  CHECK(!valid_window(125));
}

TEST_CASE("rms and feature mapping") {
  const std::vector<double> per_axis{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  const auto c = rms_combine(per_axis, 3);
  REQUIRE(c.size() == 2);
  CHECK(c[0] == doctest::Approx(std::sqrt((0.01 + 0.09 + 0.25) / 3)).epsilon(1e-15));
  CHECK(c[1] == doctest::Approx(std::sqrt((0.04 + 0.16 + 0.36) / 3)).epsilon(1e-15));
  CHECK(code_of([&] { rms_combine(per_axis, 4); }) == ErrorCode::shape);

  const auto schema = dataio::default_schema();
  std::vector<double> encoded(50);
  for (std::size_t i = 0; i < 50; ++i) encoded[i] = static_cast<double>(i) / 100.0;
  const auto f = feature_importance(schema, encoded);
  REQUIRE(f.size() == 47);
  CHECK(f[0] == 0.0);
  CHECK(f[schema.index("gender")] == doctest::Approx((0.45 + 0.46) / 2));
  CHECK(f[schema.index("learning_mode")] == doctest::Approx((0.47 + 0.48 + 0.49) / 3));
}

TEST_CASE("top_k_features") {
  const auto schema = dataio::default_schema();
  std::vector<double> f(47, 0.1);
  f[3] = 0.9;
  f[7] = 0.5;
  const std::vector<WindowHit> w{{100, 0.7}, {300, 0.1}};
  const auto set = top_k_features(schema, f, w, Indicator::RESI, 30);
  REQUIRE(set.entries.size() == 10);
  CHECK(set.entries[0].feature == schema[3].id);
  CHECK(set.entries[1].kind == RankedEntry::Kind::motion);
  CHECK(set.entries[1].start == 100);
  CHECK(set.entries[2].feature == schema[7].id);
  // ties at 0.1: features in schema order before the window
  CHECK(set.entries[3].feature == schema[0].id);
  double total = 0.0;
  for (std::size_t i = 0; i < set.entries.size(); ++i) {
    total += set.entries[i].share;
    if (i > 0) CHECK(set.entries[i].score <= set.entries[i - 1].score);
  }
  CHECK(std::abs(total - 100.0) < 1e-9);
  CHECK(set.to_json()["entries"].size() == 10);
}

TEST_CASE("personal and aggregated importance") {
  const auto& c = hp_test::tiny_cohort();
  const auto& m = c.models[index_of(Indicator::MVPA)];
  std::vector<PersonalImportance> all;
  for (const auto& p : c.dataset.participants) all.push_back(personal_importance(m, p));
  const auto& first = all.front();
  CHECK(first.context.context.size() == 50);
  CHECK(first.motion.per_axis.size() == kMotionAxes * kWeekMinutes);
  CHECK(first.motion.combined.size() == kWeekMinutes);
  for (double v : first.context.context) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK(first.motion.combined == rms_combine(first.motion.per_axis, 3));

  const std::vector<std::size_t> members{1, 4, 9};
  const auto agg = aggregate_importance(all, members);
  for (std::size_t t = 0; t < kWeekMinutes; t += 101) {
    const double mean = (all[1].motion.combined[t] + all[4].motion.combined[t] + all[9].motion.combined[t]) / 3.0;
    CHECK(agg.motion.combined[t] == doctest::Approx(mean).epsilon(1e-15));
    CHECK(agg.motion.combined[t] > 0.0);
    CHECK(agg.motion.combined[t] < 1.0);
  }
  const auto direct = aggregate_importance(m, c.dataset, members);
  CHECK(direct.context.context == agg.context.context);
  CHECK(direct.motion.combined == agg.motion.combined);
  CHECK(code_of([&] { aggregate_importance(all, std::vector<std::size_t>{}); }) == ErrorCode::argument);

  const auto ranked = rank_importance(c.dataset.schema, agg, Indicator::MVPA, 60);
  CHECK(ranked.entries.size() == 10);

  auto cfg = hp_test::small_model_config();
  cfg.use_gates = false;
  model::HPModel gateless(cfg);
  gateless.trained = true;
  CHECK(code_of([&] { personal_importance(gateless, c.dataset.participants[0]); }) == ErrorCode::state);
}

TEST_CASE("influence identities") {
  const auto& c = hp_test::tiny_cohort();
  const auto& m = c.models[index_of(Indicator::RESI)];
  const auto& schema = c.dataset.schema;
  const InfluenceEngine engine(m, c.dataset);

  CHECK(grid_value(0, 21) == 0.0);
  CHECK(grid_value(20, 21) == 1.0);
  CHECK(grid_value(10, 21) == 0.5);

  const auto slot = schema.encoded_offset()[schema.index("peer_support")];
  const auto gslot = schema.encoded_offset()[schema.index("gender")];
  for (std::size_t i = 0; i < c.dataset.participants.size(); ++i) {
    const auto& p = c.dataset.participants[i];
    const std::vector<std::size_t> one{i};
    const double base = m.predict(p);
    CHECK(engine.probability(i) == base);
    CHECK(engine.numeric_at("peer_support", p.context.values[slot], one) == base);
    const std::string gender = p.context.values[gslot] == 1.0 ? "female" : "male";
    CHECK(engine.categorical_at("gender", gender, one) == base);
  }

  SUBCASE("motion window at the subject's own constant value") {
    auto ds = c.dataset;
    auto& p = ds.participants[3];
    for (std::size_t a = 0; a < kMotionAxes; ++a) {
      for (std::size_t t = 600; t < 660; ++t) p.motion.values[a * kWeekMinutes + t] = 0.25f;
    }
    const InfluenceEngine e(m, ds);
    const std::vector<std::size_t> one{3};
    CHECK(e.motion_at(600, 60, 0.25, one) == m.predict(p));
  }

  SUBCASE("group curve is the mean of individual curves") {
    const std::vector<std::size_t> group{0, 2, 5, 7};
    const auto g = engine.numeric("sleep_quality", group, Level::group);
    REQUIRE(g.points.size() == 21);
    for (std::size_t k = 0; k < g.points.size(); ++k) {
      double sum = 0.0;
      for (auto i : group) {
        sum += engine.numeric("sleep_quality", std::vector<std::size_t>{i}, Level::individual).points[k].probability;
      }
      CHECK(g.points[k].probability == doctest::Approx(sum / 4.0).epsilon(1e-14));
      CHECK(g.points[k].probability > 0.0);
      CHECK(g.points[k].probability < 1.0);
    }
    const auto cat = engine.categorical("learning_mode", group, Level::group);
    CHECK(cat.points.size() == 3);
    CHECK(cat.points[1].category == "mixed");
  }

  SUBCASE("errors") {
    const auto all = all_of(c.dataset.participants.size());
    CHECK(code_of([&] { engine.numeric("gender", all, Level::overall); }) == ErrorCode::type);
    CHECK(code_of([&] { engine.categorical("age", all, Level::overall); }) == ErrorCode::type);
    CHECK(code_of([&] { engine.numeric("shoe_size", all, Level::overall); }) == ErrorCode::not_found);
    CHECK(code_of([&] { engine.motion_window(10070, 60, all, Level::overall); }) == ErrorCode::argument);
    CHECK(code_of([&] { engine.numeric("age", std::vector<std::size_t>{}, Level::group); }) == ErrorCode::argument);
  }
}

TEST_CASE("zero-weight streams give flat curves") {
  const auto& c = hp_test::tiny_cohort();
  auto m = c.models[index_of(Indicator::MVPA)];
  auto params = m.network.parameters();
  for (const auto* name : {"motion_conv.0.weight", "context_encoder.0.weight"}) {
    const auto& g = m.network.group(name);
    std::fill_n(params.begin() + static_cast<long>(g.offset), g.size(), 0.0);
  }
  const InfluenceEngine engine(m, c.dataset);
  const std::vector<std::size_t> subjects{0, 1, 2};
  auto spread = [](const InfluenceCurve& curve) {
    double lo = 1.0, hi = 0.0;
    for (const auto& pt : curve.points) {
      lo = std::min(lo, pt.probability);
      hi = std::max(hi, pt.probability);
    }
    return hi - lo;
  };
  CHECK(spread(engine.motion_window(1080, 60, subjects, Level::group)) < 1e-9);
  CHECK(spread(engine.numeric("peer_support", subjects, Level::group)) < 1e-9);
  CHECK(spread(engine.categorical("gender", subjects, Level::group)) < 1e-9);
}
