#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "healthprism/model/gate.hpp"
#include "healthprism/model/hpmodel.hpp"
#include "healthprism/model/metrics.hpp"
#include "healthprism/model/network.hpp"
#include "healthprism/model/train.hpp"
#include "support.hpp"

using namespace healthprism;
using namespace healthprism::model;

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

double pairwise_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      ++pairs;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("gate layer") {
  GateLayer g{{0.5, -2.0}, {0.1, 0.3}, false};
  RowMatrix x(2, 3);
  x << 0.0, 0.5, 1.0, -1.0, 2.0, 0.25;
  const auto out = gate_apply(g, x);
  for (int c = 0; c < 2; ++c) {
    for (int t = 0; t < 3; ++t) {
      const double w = 1.0 / (1.0 + std::exp(-(g.weight[c] * x(c, t) + g.bias[c])));
      CHECK(out.weights(c, t) == doctest::Approx(w).epsilon(1e-15));
      CHECK(out.gated(c, t) == doctest::Approx(w * x(c, t)).epsilon(1e-15));
      CHECK(out.weights(c, t) > 0.0);
      CHECK(out.weights(c, t) < 1.0);
    }
  }
  GateLayer relu{{-3.0}, {0.0}, true};
  RowMatrix y(1, 1);
  y << 1.0;
  CHECK(gate_apply(relu, y).weights(0, 0) == 0.5);
}

TEST_CASE("model config") {
  ModelConfig c;
  Network net(c);
  CHECK(c.head_input_width() == 128);
  CHECK(net.group("context_encoder.0.weight").cols == 50);
  CHECK(net.group("head.0.weight").cols == 128);
  CHECK(ModelConfig::from_json(c.to_json()).to_json() == c.to_json());

  ModelConfig bad;
  bad.head_layers = {8, 2};
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::config);
  bad = ModelConfig{};
  bad.motion_length = 10;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::config);
  CHECK(parse_streams("motion_only") == Streams::motion_only);
  CHECK(code_of([] { parse_streams("neither"); }) == ErrorCode::config);

  ModelConfig ctx_only;
  ctx_only.streams = Streams::context_only;
  CHECK(ctx_only.head_input_width() == 64);
  CHECK(!Network(ctx_only).has_group("gru.weight_ih"));
}

TEST_CASE("initial gates are uninformative") {
  Network net(hp_test::miniature_config());
  const auto g = net.context_gate();
  CHECK(g.weight == std::vector<double>{0.0});
  CHECK(g.bias == std::vector<double>{0.0});
  RowMatrix x = RowMatrix::Constant(1, 8, 0.7);
  CHECK((gate_apply(g, x).weights.array() == 0.5).all());
}

TEST_CASE("forward is pure and decomposes exactly") {
  const auto cfg = hp_test::miniature_config();
  Network net(cfg);
  net.initialize(77);
  std::vector<double> ctx(8);
  std::vector<float> mot(96);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& v : ctx) v = u(rng);
  for (auto& v : mot) v = static_cast<float>(u(rng));
  Workspace ws;
  const SampleView s{ctx, mot};
  const double a = net.forward(s, Mode::inference, 0, ws);
  const double b = net.forward(s, Mode::inference, 123, ws);
  CHECK(a == b);
  CHECK(net.probability(s) == sigmoid(a));
  CHECK(net.head_logit(net.context_embedding(ctx), net.motion_embedding(mot)) == a);

  std::vector<double> short_ctx(7);
  CHECK(code_of([&] { net.probability({short_ctx, mot}); }) == ErrorCode::shape);
}

TEST_CASE("gradient check on the miniature config") {
  for (auto streams : {Streams::both, Streams::context_only, Streams::motion_only}) {
    for (bool gates : {true, false}) {
      auto cfg = hp_test::miniature_config();
      cfg.streams = streams;
      cfg.use_gates = gates;
      for (const auto& g : hp_test::gradient_check(cfg, 42)) {
        INFO(to_string(streams), " gates=", gates, " ", g.group);
        CHECK(g.relative_error <= 1e-4);
      }
    }
  }
}

TEST_CASE("16-sample overfit") {
  const auto cfg = hp_test::miniature_config();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<std::vector<double>> ctx(16, std::vector<double>(8));
  std::vector<std::vector<float>> mot(16, std::vector<float>(96));
  std::vector<std::uint8_t> labels(16);
  std::vector<SampleView> views;
  for (int i = 0; i < 16; ++i) {
    for (auto& v : ctx[i]) v = u(rng);
    for (auto& v : mot[i]) v = static_cast<float>(u(rng));
    labels[i] = i % 2;
    views.push_back({ctx[i], mot[i]});
  }
  Network net(cfg);
  TrainConfig tc;
  tc.epochs = 2000;
  tc.batch_size = 16;
  tc.early_stopping_patience = 0;
  const auto curve = fit(net, views, labels, {1e-2, 0.0, 0.0}, tc, 3);
  CHECK(*std::min_element(curve.begin(), curve.end()) < 0.01);
}

TEST_CASE("evaluate_auc") {
  const std::vector<double> s{0.1, 0.2, 0.8, 0.9};
  const std::vector<std::uint8_t> y{0, 0, 1, 1};
  CHECK(evaluate_auc(s, y) == 1.0);
  const std::vector<std::uint8_t> one{1, 1, 1, 1};
  CHECK(code_of([&] { evaluate_auc(s, one); }) == ErrorCode::evaluation);
  const std::vector<double> aucs{1, 1, 1, 0.5, 0.5, 0.5};
  CHECK(mean_auc(aucs) == 0.75);

  std::mt19937_64 rng(17);
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 2 + rng() % 199;
    std::vector<double> sc(n);
    std::vector<std::uint8_t> lb(n);
    const int levels = 1 + static_cast<int>(rng() % 20);
    for (std::size_t i = 0; i < n; ++i) {
      sc[i] = static_cast<double>(rng() % static_cast<unsigned>(levels)) / 7.0;
      lb[i] = rng() % 2;
    }
    lb[0] = 0;
    lb[1] = 1;
    CHECK(evaluate_auc(sc, lb) == pairwise_auc(sc, lb));
  }

  std::vector<double> sc(1000);
  std::vector<std::uint8_t> lb(1000);
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t i = 0; i < 1000; ++i) {
    sc[i] = u(rng);
    lb[i] = rng() % 2;
  }
  CHECK(std::abs(evaluate_auc(sc, lb) - 0.5) <= 0.05);
}

TEST_CASE("stratified split and folds") {
  std::vector<std::uint8_t> y(103);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = i % 3 == 0;
  const auto pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
  const auto a = stratified_split(y, 0.2, 9);
  const auto b = stratified_split(y, 0.2, 9);
  CHECK(a.test == b.test);
  CHECK(std::is_sorted(a.test.begin(), a.test.end()));
  CHECK(std::is_sorted(a.train.begin(), a.train.end()));
  CHECK(a.train.size() + a.test.size() == y.size());
  std::size_t test_pos = 0;
  for (auto i : a.test) test_pos += y[i];
  CHECK(test_pos == static_cast<std::size_t>(std::lround(0.2 * static_cast<double>(pos))));
  CHECK(a.test.size() - test_pos == static_cast<std::size_t>(std::lround(0.2 * static_cast<double>(y.size() - pos))));
  std::vector<std::size_t> all(a.train);
  all.insert(all.end(), a.test.begin(), a.test.end());
  std::sort(all.begin(), all.end());
  CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
  CHECK(stratified_split(y, 0.2, 10).test != a.test);

  const auto folds = stratified_folds(y, 5, 2);
  for (int f = 0; f < 5; ++f) {
    std::size_t p = 0, n = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (folds[i] != f) continue;
      (y[i] ? p : n) += 1;
    }
    CHECK(p >= pos / 5);
    CHECK(p <= pos / 5 + 1);
    CHECK(n >= (y.size() - pos) / 5);
    CHECK(n <= (y.size() - pos) / 5 + 1);
  }
}

TEST_CASE("train config") {
  TrainConfig t;
  const auto c = t.candidates();
  REQUIRE(c.size() == 8);
  CHECK(c.front().learning_rate == 1e-3);
  CHECK(c.front().weight_decay == 0.0);
  CHECK(c[1].weight_decay == 1e-4);
  CHECK(c.back().learning_rate == 3e-4);
  t.folds = 4;
  CHECK(code_of([&] { t.validate(); }) == ErrorCode::config);
  const auto pinned = TrainConfig::from_json({{"learning_rate", 0.01}, {"dropout", 0.1}, {"weight_decay", 0.0}, {"epochs", 3}});
  REQUIRE(pinned.candidates().size() == 1);
  CHECK(pinned.candidates()[0].learning_rate == 0.01);
  CHECK(pinned.epochs == 3);
  const TrainConfig fresh;
  CHECK(TrainConfig::from_json(fresh.to_json()).to_json() == fresh.to_json());
}

TEST_CASE("training is deterministic and artifacts round-trip") {
  const auto ds = hp_test::synth_dataset(40, 2);
  auto tc = hp_test::quick_train_config(1);
  tc.seed = 3;
  const auto a = train(ds, Indicator::MVPA, tc, hp_test::small_model_config());
  const auto b = train(ds, Indicator::MVPA, tc, hp_test::small_model_config());
  const auto bytes = serialize_model(a.model);
  CHECK(bytes == serialize_model(b.model));
  CHECK(a.report.to_json() == b.report.to_json());
  CHECK(a.report.train_ids.size() + a.report.test_ids.size() == 40);
  CHECK(!a.report.cross_validated);
  CHECK(a.report.test_auc >= 0.0);

  for (double p : a.model.network.parameters()) CHECK(static_cast<double>(static_cast<float>(p)) == p);

  const auto back = deserialize_model(bytes);
  CHECK(serialize_model(back) == bytes);
  CHECK(back.indicator == Indicator::MVPA);
  CHECK(back.training_seed == 3);
  for (const auto& p : ds.participants) CHECK(back.predict(p) == a.model.predict(p));

  std::string tampered = bytes;
  tampered[bytes.size() / 2] ^= 0x01;
  CHECK(code_of([&] { deserialize_model(tampered); }) == ErrorCode::integrity);
  CHECK(code_of([&] { deserialize_model(bytes.substr(0, 20)); }) == ErrorCode::integrity);

  HPModel untrained(hp_test::small_model_config());
  CHECK(code_of([&] { untrained.predict(ds.participants[0]); }) == ErrorCode::state);

  SUBCASE("cross-validation runs with a grid") {
    auto cv = hp_test::quick_train_config(1);
    cv.grid.learning_rate = {3e-3, 1e-3};
    const auto r = train(ds, Indicator::MVPA, cv, hp_test::small_model_config());
    CHECK(r.report.cross_validated);
    REQUIRE(r.report.grid.size() == 2);
    CHECK(r.report.grid[0].fold_aucs.size() == 5);
  }
}

TEST_CASE("single-class training labels are rejected") {
  auto ds = hp_test::synth_dataset(20, 4);
  for (auto& p : ds.participants) p.labels[index_of(Indicator::CONN)] = 1;
  CHECK(code_of([&] { train(ds, Indicator::CONN, hp_test::quick_train_config(1), hp_test::small_model_config()); }) ==
        ErrorCode::training);
}

TEST_CASE("prediction normalization") {
  const std::vector<double> v{0.2, 0.6, 0.4};
  const auto nv = minmax_normalize(v);
  CHECK(nv[0] == 0.0);
  CHECK(nv[1] == 1.0);
  CHECK(nv[2] == doctest::Approx(0.5).epsilon(1e-12));
  const std::vector<double> flat{0.3, 0.3};
  CHECK(minmax_normalize(flat) == std::vector<double>{0.5, 0.5});

  const auto& cohort = hp_test::tiny_cohort();
  std::vector<const HPModel*> ptrs;
  for (const auto& m : cohort.models) ptrs.push_back(&m);
  const auto set = predict_and_normalize(ptrs, cohort.dataset);
  for (std::size_t k = 0; k < kIndicatorCount; ++k) {
    const auto& n = set.normalized[k];
    const auto& p = set.probability[k];
    if (*std::min_element(p.begin(), p.end()) == *std::max_element(p.begin(), p.end())) continue;
    CHECK(*std::min_element(n.begin(), n.end()) == 0.0);
    CHECK(*std::max_element(n.begin(), n.end()) == 1.0);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == cohort.models[k].predict(cohort.dataset.participants[i]));
  }
}
