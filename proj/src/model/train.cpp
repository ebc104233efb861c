#include "healthprism/model/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "healthprism/model/metrics.hpp"
#include "healthprism/random.hpp"

namespace healthprism::model {

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

std::vector<std::size_t> class_members(std::span<const std::uint8_t> labels, std::uint8_t cls) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if ((labels[i] != 0) == (cls != 0)) out.push_back(i);
  }
  return out;
}

std::pair<std::size_t, std::size_t> class_counts(std::span<const std::uint8_t> labels) {
  std::size_t pos = 0;
  for (auto y : labels) pos += y != 0;
  return {pos, labels.size() - pos};
}

template <typename T>
std::vector<T> pick(const std::vector<T>& items, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(items[i]);
  return out;
}

std::vector<double> scores_of(const Network& net, std::span<const SampleView> samples) {
  std::vector<double> out;
  out.reserve(samples.size());
  Workspace ws;
  for (const auto& s : samples) out.push_back(net.forward(s, Mode::inference, 0, ws));
  return out;
}

}  // namespace

nlohmann::json HyperParams::to_json() const {
  return {{"learning_rate", learning_rate}, {"dropout", dropout}, {"weight_decay", weight_decay}};
}

std::vector<HyperParams> TrainConfig::candidates() const {
  std::vector<HyperParams> out;
  for (double lr : grid.learning_rate) {
    for (double d : grid.dropout) {
      for (double wd : grid.weight_decay) out.push_back({lr, d, wd});
    }
  }
  return out;
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::config, "invalid train config: " + what);
  };
  require(epochs >= 1, "epochs must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(folds == 5, "folds is fixed at 5");
  require(test_fraction > 0.0 && test_fraction < 1.0, "test_fraction must lie in (0, 1)");
  require(early_stopping_patience >= 0, "early_stopping_patience must be >= 0");
  require(gradient_clip >= 0.0, "gradient_clip must be >= 0");
  require(gate_lr_scale > 0.0, "gate_lr_scale must be positive");
  require(!grid.learning_rate.empty() && !grid.dropout.empty() && !grid.weight_decay.empty(),
          "every grid axis needs at least one value");
  for (double lr : grid.learning_rate) require(lr > 0.0, "learning rates must be positive");
  for (double d : grid.dropout) require(d >= 0.0 && d < 1.0, "dropout must lie in [0, 1)");
  for (double wd : grid.weight_decay) require(wd >= 0.0, "weight_decay must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"adam_epsilon", adam_epsilon},
          {"gradient_clip", gradient_clip},
          {"gate_lr_scale", gate_lr_scale},
          {"early_stopping_patience", early_stopping_patience},
          {"min_delta", min_delta},
          {"folds", folds},
          {"cv_single_candidate", cv_single_candidate},
          {"test_fraction", test_fraction},
          {"grid",
           {{"learning_rate", grid.learning_rate},
            {"dropout", grid.dropout},
            {"weight_decay", grid.weight_decay}}},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
    c.gradient_clip = j.value("gradient_clip", c.gradient_clip);
    c.gate_lr_scale = j.value("gate_lr_scale", c.gate_lr_scale);
    c.early_stopping_patience = j.value("early_stopping_patience", c.early_stopping_patience);
    c.min_delta = j.value("min_delta", c.min_delta);
    c.folds = j.value("folds", c.folds);
    c.cv_single_candidate = j.value("cv_single_candidate", c.cv_single_candidate);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      c.grid.learning_rate = g.value("learning_rate", c.grid.learning_rate);
      c.grid.dropout = g.value("dropout", c.grid.dropout);
      c.grid.weight_decay = g.value("weight_decay", c.grid.weight_decay);
    }
    // Scalar shorthands pin the grid to one value.
    if (j.contains("learning_rate")) c.grid.learning_rate = {j.at("learning_rate").get<double>()};
    if (j.contains("dropout")) c.grid.dropout = {j.at("dropout").get<double>()};
    if (j.contains("weight_decay")) c.grid.weight_decay = {j.at("weight_decay").get<double>()};
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, std::string("malformed train config: ") + e.what());
  }
  c.validate();
  return c;
}

Split stratified_split(std::span<const std::uint8_t> labels, double test_fraction, std::uint64_t seed) {
  Split split;
  for (std::uint8_t cls : {0, 1}) {
    auto members = class_members(labels, cls);
    Rng rng(derive_seed(seed, 0x5b117, cls));
    rng.shuffle(std::span<std::size_t>(members));
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(members.size())));
    split.test.insert(split.test.end(), members.begin(), members.begin() + static_cast<long>(n_test));
    split.train.insert(split.train.end(), members.begin() + static_cast<long>(n_test), members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::vector<int> stratified_folds(std::span<const std::uint8_t> labels, int folds, std::uint64_t seed) {
  if (folds < 1) fail(ErrorCode::argument, "folds must be >= 1");
  std::vector<int> fold_of(labels.size(), 0);
  for (std::uint8_t cls : {0, 1}) {
    auto members = class_members(labels, cls);
    Rng rng(derive_seed(seed, 0xf01d, cls));
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t i = 0; i < members.size(); ++i) fold_of[members[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
  }
  return fold_of;
}

std::vector<std::uint8_t> labels_of(const dataio::Dataset& dataset, Indicator indicator) {
  std::vector<std::uint8_t> out;
  out.reserve(dataset.participants.size());
  for (const auto& p : dataset.participants) out.push_back(p.labels[index_of(indicator)]);
  return out;
}

std::vector<double> fit(Network& network, std::span<const SampleView> samples,
                        std::span<const std::uint8_t> labels, const HyperParams& hp,
                        const TrainConfig& config, std::uint64_t seed, const TrainLog& log) {
  if (samples.size() != labels.size()) fail(ErrorCode::argument, "samples and labels differ in length");
  const auto [pos, neg] = class_counts(labels);
  if (pos == 0 || neg == 0) {
    fail(ErrorCode::training, "training labels are single-class (" + std::to_string(pos) + " positive, " +
                                  std::to_string(neg) + " negative)");
  }
  const double pos_weight = static_cast<double>(neg) / static_cast<double>(pos);
  network.initialize(derive_seed(seed, 0x1417));

  const std::size_t n_params = network.parameter_count();
  std::vector<double> grad(n_params), m(n_params, 0.0), v(n_params, 0.0);
  constexpr double beta1 = 0.9, beta2 = 0.999;
  double beta1_t = 1.0, beta2_t = 1.0;
  auto params = network.parameters();
  std::vector<double> lr(n_params, hp.learning_rate);
  for (const auto& g : network.groups()) {
    if (g.name.starts_with("context_gate.") || g.name.starts_with("motion_gate.")) {
      std::fill_n(lr.begin() + static_cast<long>(g.offset), g.size(), hp.learning_rate * config.gate_lr_scale);
    }
  }

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  Workspace ws;
  std::vector<double> curve;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffler(derive_seed(seed, 0xe90c, static_cast<std::uint64_t>(epoch)));
    shuffler.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t i = order[k];
        const std::uint64_t dropout_seed = derive_seed(seed, static_cast<std::uint64_t>(epoch), i);
        const double z = network.forward(samples[i], Mode::training, dropout_seed, ws);
        const bool y = labels[i] != 0;
        const double w = y ? pos_weight : 1.0;
        epoch_loss += w * (y ? softplus(-z) : softplus(z));
        network.backward(ws, w * (sigmoid(z) - (y ? 1.0 : 0.0)), grad);
      }
      const double scale = 1.0 / static_cast<double>(stop - start);
      double norm2 = 0.0;
      for (std::size_t j = 0; j < n_params; ++j) {
        grad[j] = grad[j] * scale + hp.weight_decay * params[j];
        norm2 += grad[j] * grad[j];
      }
      if (!std::isfinite(norm2)) {
        fail(ErrorCode::divergence, "non-finite gradient in epoch " + std::to_string(epoch));
      }
      const double norm = std::sqrt(norm2);
      const double clip = (config.gradient_clip > 0.0 && norm > config.gradient_clip) ? config.gradient_clip / norm : 1.0;
      beta1_t *= beta1;
      beta2_t *= beta2;
      for (std::size_t j = 0; j < n_params; ++j) {
        const double g = grad[j] * clip;
        m[j] = beta1 * m[j] + (1.0 - beta1) * g;
        v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
        const double m_hat = m[j] / (1.0 - beta1_t);
        const double v_hat = v[j] / (1.0 - beta2_t);
        params[j] -= lr[j] * m_hat / (std::sqrt(v_hat) + config.adam_epsilon);
      }
    }
    epoch_loss /= static_cast<double>(samples.size());
    if (!std::isfinite(epoch_loss)) {
      fail(ErrorCode::divergence, "non-finite training loss in epoch " + std::to_string(epoch));
    }
    curve.push_back(epoch_loss);
    if (log) log("epoch " + std::to_string(epoch) + " loss " + std::to_string(epoch_loss));
    if (epoch_loss < best - config.min_delta) {
      best = epoch_loss;
      stale = 0;
    } else if (config.early_stopping_patience > 0 && ++stale >= config.early_stopping_patience) {
      break;
    }
  }
  return curve;
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : grid) {
    rows.push_back({{"params", r.params.to_json()}, {"fold_aucs", r.fold_aucs}, {"mean_auc", r.mean_auc}});
  }
  return {{"v", 1},
          {"indicator", std::string(healthprism::to_string(indicator))},
          {"seed", seed},
          {"train_size", train_ids.size()},
          {"test_size", test_ids.size()},
          {"test_ids", test_ids},
          {"positive_weight", positive_weight},
          {"cross_validated", cross_validated},
          {"grid", rows},
          {"chosen", chosen.to_json()},
          {"loss_curve", loss_curve},
          {"epochs_run", epochs_run},
          {"test_auc", test_auc}};
}

TrainResult train(const dataio::Dataset& dataset, Indicator indicator, const TrainConfig& config,
                  const ModelConfig& model_config, const TrainLog& log) {
  config.validate();
  model_config.validate();
  const auto labels = labels_of(dataset, indicator);
  const auto [pos, neg] = class_counts(labels);
  if (pos == 0 || neg == 0) {
    fail(ErrorCode::training, std::string(to_string(indicator)) + " labels are single-class (" +
                                  std::to_string(pos) + " positive, " + std::to_string(neg) + " negative)");
  }
  std::vector<SampleView> samples;
  samples.reserve(dataset.participants.size());
  for (const auto& p : dataset.participants) samples.push_back(sample_of(p));

  const std::uint64_t seed = derive_seed(config.seed, index_of(indicator));
  const Split split = stratified_split(labels, config.test_fraction, seed);
  const auto train_samples = pick(samples, split.train);
  const auto train_labels = pick(labels, split.train);
  const auto test_samples = pick(samples, split.test);
  const auto test_labels = pick(labels, split.test);
  {
    const auto [tp, tn] = class_counts(train_labels);
    const auto [sp, sn] = class_counts(test_labels);
    if (tp == 0 || tn == 0 || sp == 0 || sn == 0) {
      fail(ErrorCode::training, std::string(to_string(indicator)) +
                                    ": too few members of one class for a stratified train/test split");
    }
  }

  TrainReport report;
  report.indicator = indicator;
  report.seed = config.seed;
  for (auto i : split.train) report.train_ids.push_back(dataset.participants[i].id);
  for (auto i : split.test) report.test_ids.push_back(dataset.participants[i].id);
  {
    const auto [tp, tn] = class_counts(train_labels);
    report.positive_weight = static_cast<double>(tn) / static_cast<double>(tp);
  }

  const auto candidates = config.candidates();
  report.chosen = candidates.front();
  if (candidates.size() > 1 || config.cv_single_candidate) {
    report.cross_validated = true;
    const auto fold_of = stratified_folds(train_labels, config.folds, seed);
    double best = -1.0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      GridRow row{candidates[c], {}, 0.0};
      for (int f = 0; f < config.folds; ++f) {
        std::vector<std::size_t> fit_idx, val_idx;
        for (std::size_t i = 0; i < fold_of.size(); ++i) (fold_of[i] == f ? val_idx : fit_idx).push_back(i);
        const auto fit_samples = pick(train_samples, fit_idx);
        const auto fit_labels = pick(train_labels, fit_idx);
        const auto val_samples = pick(train_samples, val_idx);
        const auto val_labels = pick(train_labels, val_idx);
        const auto [vp, vn] = class_counts(val_labels);
        if (vp == 0 || vn == 0) {
          fail(ErrorCode::training, std::string(to_string(indicator)) +
                                        ": a validation fold lacks one class; need >= 5 members per class");
        }
        ModelConfig mc = model_config;
        mc.dropout_rate = candidates[c].dropout;
        Network net(mc);
        fit(net, fit_samples, fit_labels, candidates[c], config, derive_seed(seed, 0xc0, c * 16 + static_cast<std::size_t>(f)));
        quantize_to_float(net);
        row.fold_aucs.push_back(evaluate_auc(scores_of(net, val_samples), val_labels));
        if (log) {
          log("candidate " + std::to_string(c) + " fold " + std::to_string(f) + " auc " +
              std::to_string(row.fold_aucs.back()));
        }
      }
      row.mean_auc = mean_auc(row.fold_aucs);
      if (row.mean_auc > best) {
        best = row.mean_auc;
        report.chosen = candidates[c];
      }
      report.grid.push_back(std::move(row));
    }
  }

  ModelConfig final_config = model_config;
  final_config.dropout_rate = report.chosen.dropout;
  final_config.seed = config.seed;
  HPModel model(final_config, indicator);
  report.loss_curve = fit(model.network, train_samples, train_labels, report.chosen, config,
                          derive_seed(seed, 0xf1a1), log);
  report.epochs_run = static_cast<int>(report.loss_curve.size());
  quantize_to_float(model.network);
  model.trained = true;
  model.training_seed = config.seed;
  report.test_auc = evaluate_auc(scores_of(model.network, test_samples), test_labels);
  return TrainResult{std::move(model), std::move(report)};
}

}  // namespace healthprism::model
