#include "support.hpp"

#include <cmath>
#include <cstdlib>
#include <random>

#include <nlohmann/json.hpp>

#include "healthprism/dataio/io.hpp"
#include "healthprism/dataio/preprocess.hpp"

namespace hp_test {

hp::model::ModelConfig small_model_config() {
  hp::model::ModelConfig c;
  c.context_embed_dim = 8;
  c.motion_embed_dim = 4;
  c.context_encoder_layers = {8, 8};
  c.motion_cnn_blocks = {{4, 7, 8}, {4, 7, 8}, {4, 7, 8}};
  c.gru_hidden = 4;
  c.head_layers = {4, 1};
  return c;
}

hp::model::ModelConfig miniature_config() {
  hp::model::ModelConfig c;
  c.context_length = 8;
  c.motion_length = 32;
  c.context_embed_dim = 4;
  c.motion_embed_dim = 4;
  c.context_encoder_layers = {8, 4};
  c.motion_cnn_blocks = {{4, 3, 2}, {4, 3, 2}, {4, 3, 2}};
  c.gru_hidden = 4;
  c.head_layers = {4, 1};
  c.dropout_rate = 0.0;
  return c;
}

hp::model::TrainConfig quick_train_config(int epochs) {
  hp::model::TrainConfig t;
  t.epochs = epochs;
  t.grid.learning_rate = {3e-3};
  t.grid.dropout = {0.0};
  t.grid.weight_decay = {0.0};
  return t;
}

hp::dataio::Dataset synth_dataset(std::size_t n, std::uint64_t seed) {
  hp::dataio::SynthConfig cfg;
  cfg.n = n;
  cfg.seed = seed;
  return hp::dataio::preprocess(hp::dataio::generate_synthetic(cfg)).dataset;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("healthprism_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

std::vector<GroupGradientError> gradient_check(const hp::model::ModelConfig& config, std::uint64_t seed,
                                               double step) {
  using namespace hp::model;
  Network net(config);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  auto params = net.parameters();
  for (const auto& g : net.groups()) {
    const bool scale = g.name.ends_with(".gamma");
    for (std::size_t j = 0; j < g.size(); ++j) params[g.offset + j] = scale ? 1.0 + u(rng) : u(rng);
  }
  struct Sample {
    std::vector<double> context;
    std::vector<float> motion;
    bool label;
    double weight;
  };
  std::vector<Sample> samples;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int s = 0; s < 3; ++s) {
    Sample x;
    x.context.resize(static_cast<std::size_t>(config.context_length));
    for (auto& v : x.context) v = unit(rng);
    x.motion.resize(static_cast<std::size_t>(config.motion_channels * config.motion_length));
    for (auto& v : x.motion) v = static_cast<float>(unit(rng));
    x.label = s % 2 == 0;
    x.weight = x.label ? 1.7 : 1.0;
    samples.push_back(std::move(x));
  }
  auto view = [&](const Sample& x) {
    return SampleView{config.uses_context() ? std::span<const double>(x.context) : std::span<const double>{},
                      config.uses_motion() ? std::span<const float>(x.motion) : std::span<const float>{}};
  };
  Workspace ws;
  auto loss = [&] {
    double total = 0.0;
    for (const auto& x : samples) {
      const double z = net.forward(view(x), Mode::training, 1, ws);
      total += x.weight * (x.label ? softplus(-z) : softplus(z));
    }
    return total;
  };
  std::vector<double> grad(net.parameter_count(), 0.0);
  for (const auto& x : samples) {
    const double z = net.forward(view(x), Mode::training, 1, ws);
    net.backward(ws, x.weight * (sigmoid(z) - (x.label ? 1.0 : 0.0)), grad);
  }
  std::vector<GroupGradientError> out;
  for (const auto& g : net.groups()) {
    double diff2 = 0.0, a2 = 0.0, f2 = 0.0;
    for (std::size_t j = g.offset; j < g.offset + g.size(); ++j) {
      const double keep = params[j];
      params[j] = keep + step;
      const double up = loss();
      params[j] = keep - step;
      const double down = loss();
      params[j] = keep;
      const double fd = (up - down) / (2.0 * step);
      diff2 += (grad[j] - fd) * (grad[j] - fd);
      a2 += grad[j] * grad[j];
      f2 += fd * fd;
    }
    const double denom = std::max(std::sqrt(a2), std::sqrt(f2));
    out.push_back({g.name, denom > 1e-12 ? std::sqrt(diff2) / denom : std::sqrt(diff2), std::sqrt(a2)});
  }
  return out;
}

std::vector<RouteCase> route_suite(const hp::dataio::Dataset& dataset) {
  const std::string a = dataset.participants.at(0).id;
  const std::string b = dataset.participants.at(1).id;
  const std::string ind = "/api/individual/" + a;
  return {
      {"/api/health", {}, {"status", "dataset_hash", "models"}},
      {"/api/schema", {}, {"features", "indicators", "context_width"}},
      {"/api/summary/categorical", {}, {"flows"}},
      {"/api/summary/correlation", {{"top", "5"}, {"pin", "age:bmi"}}, {"features", "rho", "p_value", "pairs"}},
      {"/api/summary/importance", {{"indicator", "MVPA"}, {"window", "30"}}, {"indicator", "window", "entries"}},
      {"/api/summary/influence", {{"indicator", "RESI"}, {"feature", "peer_support"}}, {"indicator", "points"}},
      {"/api/summary/influence", {{"indicator", "PHYF"}, {"feature", "learning_mode"}}, {"indicator", "points"}},
      {"/api/summary/motion", {{"window", "60"}, {"from", "0"}, {"to", "1440"}}, {"bucket_start", "magnitude"}},
      {"/api/group/graph", {{"indicators", "MVPA,RESI,CONN"}, {"genders", "female"}}, {"nodes", "edges"}},
      {"/api/group/graph", {{"view", "table"}, {"ages", "adolescent"}}, {"nodes", "view"}},
      {"/api/group/importance", {{"indicator", "RESI"}, {"window", "60"}, {"genders", "male"}}, {"entries"}},
      {"/api/group/influence", {{"indicator", "MVPA"}, {"feature", "sport_days"}, {"ages", "child"}}, {"points"}},
      {"/api/group/context", {{"features", "age,gender,sleep_quality"}, {"genders", "female"}}, {"features", "groups"}},
      {"/api/group/motion", {{"window", "120"}, {"genders", "male"}}, {"bucket_start", "group_size"}},
      {ind + "/profile", {{"indicators", "MVPA,PHYF,VVAS"}}, {"id", "values", "raw_area", "division"}},
      {ind + "/importance", {{"indicator", "CONN"}, {"window", "15"}}, {"entries"}},
      {ind + "/influence", {{"indicator", "MVPA"}, {"motion_start", "1080"}, {"motion_w", "60"}}, {"points"}},
      {ind + "/influence", {{"indicator", "VVAS"}, {"feature", "school_satisfaction"}}, {"points"}},
      {ind + "/context", {}, {"id", "features", "pattern"}},
      {ind + "/motion", {{"window", "30"}, {"from", "1000"}, {"to", "2000"}}, {"id", "coverage", "magnitude"}},
      {"/api/compare", {{"ids", a + "," + b}, {"window", "60"}}, {"individuals"}},
  };
}

namespace {

std::string non_finite(const nlohmann::json& j, const std::string& where) {
  if (j.is_number_float() && !std::isfinite(j.get<double>())) return "non-finite number at " + where;
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      if (auto e = non_finite(v, where + "." + k); !e.empty()) return e;
    }
  }
  if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (auto e = non_finite(j[i], where + "[" + std::to_string(i) + "]"); !e.empty()) return e;
    }
  }
  return {};
}

}  // namespace

std::string check_body(const RouteCase& route, const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    return route.path + ": not JSON: " + e.what();
  }
  if (!j.is_object()) return route.path + ": body is not an object";
  if (j.value("v", 0) != 1) return route.path + ": missing \"v\": 1";
  for (const auto& k : route.keys) {
    if (!j.contains(k)) return route.path + ": missing key " + k;
  }
  return non_finite(j, route.path);
}

const Cohort& tiny_cohort() {
  static const Cohort cohort = [] {
    Cohort c;
    hp::dataio::SynthConfig cfg;
    cfg.n = 60;
    cfg.seed = 11;
    const auto result = hp::dataio::preprocess(hp::dataio::generate_synthetic(cfg));
    c.dataset = result.dataset;
    c.dir = scratch_dir("cohort");
    hp::dataio::write_file(c.dir / "processed.tar",
                           hp::dataio::write_processed_snapshot(result.dataset, result.report, {}));
    auto tc = quick_train_config(2);
    tc.seed = 5;
    for (auto ind : hp::kIndicators) {
      auto trained = hp::model::train(c.dataset, ind, tc, small_model_config());
      hp::model::save_model((c.dir / hp::model::artifact_name(ind)).string(), trained.model);
      c.models.push_back(std::move(trained.model));
    }
    return c;
  }();
  return cohort;
}

}  // namespace hp_test
