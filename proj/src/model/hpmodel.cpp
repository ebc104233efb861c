#include "healthprism/model/hpmodel.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "healthprism/dataio/io.hpp"
#include "healthprism/dataio/preprocess.hpp"
#include "healthprism/hash.hpp"

namespace healthprism::model {

namespace {

constexpr std::string_view kMagic = "HPMODEL1";
constexpr std::size_t kHashChars = 64;
constexpr int kArtifactVersion = 1;

static_assert(std::endian::native == std::endian::little, "artifact I/O assumes a little-endian host");

void put_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

}  // namespace

void HPModel::require_trained() const {
  if (!trained) {
    fail(ErrorCode::state, "model for " + std::string(to_string(indicator)) + " is not trained");
  }
}

double HPModel::predict(const dataio::Participant& p) const {
  require_trained();
  return network.probability(sample_of(p));
}

SampleView sample_of(const dataio::Participant& p) {
  return SampleView{p.context.values, p.motion.values};
}

void quantize_to_float(Network& network) {
  for (double& v : network.parameters()) v = static_cast<double>(static_cast<float>(v));
}

std::string serialize_model(const HPModel& model) {
  nlohmann::json header = {{"v", kArtifactVersion},
                           {"indicator", std::string(to_string(model.indicator))},
                           {"trained", model.trained},
                           {"training_seed", model.training_seed},
                           {"config", model.config().to_json()},
                           {"parameter_count", model.network.parameter_count()},
                           {"metadata", model.metadata}};
  if (model.population_range) {
    header["population_range"] = {(*model.population_range)[0], (*model.population_range)[1]};
  } else {
    header["population_range"] = nullptr;
  }
  const std::string text = header.dump();
  std::string out(kMagic);
  put_u64(out, text.size());
  out += text;
  const auto params = model.network.parameters();
  const std::size_t start = out.size();
  out.resize(start + params.size() * sizeof(float));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const float f = static_cast<float>(params[i]);
    std::memcpy(out.data() + start + i * sizeof(float), &f, sizeof(float));
  }
  out += sha256_hex(out);
  return out;
}

std::string artifact_hash(std::string_view bytes) {
  if (bytes.size() < kHashChars) fail(ErrorCode::integrity, "model artifact truncated");
  return std::string(bytes.substr(bytes.size() - kHashChars));
}

HPModel deserialize_model(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 8 + kHashChars || bytes.substr(0, kMagic.size()) != kMagic) {
    fail(ErrorCode::integrity, "not a model artifact (bad magic or truncated)");
  }
  const auto body = bytes.substr(0, bytes.size() - kHashChars);
  if (sha256_hex(body) != artifact_hash(bytes)) {
    fail(ErrorCode::integrity, "model artifact hash mismatch");
  }
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + kMagic.size(), 8);
  const std::size_t header_at = kMagic.size() + 8;
  if (header_len > body.size() - header_at) fail(ErrorCode::integrity, "model artifact header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(body.substr(header_at, header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, std::string("model artifact header: ") + e.what());
  }
  try {
    if (header.at("v").get<int>() != kArtifactVersion) {
      fail(ErrorCode::integrity, "unsupported model artifact version " + header.at("v").dump());
    }
    const auto name = header.at("indicator").get<std::string>();
    const auto ind = parse_indicator(name);
    if (!ind) fail(ErrorCode::integrity, "model artifact names unknown indicator '" + name + "'");
    HPModel model(ModelConfig::from_json(header.at("config")), *ind);
    model.trained = header.at("trained").get<bool>();
    model.training_seed = header.at("training_seed").get<std::uint64_t>();
    model.metadata = header.at("metadata");
    if (!header.at("population_range").is_null()) {
      model.population_range = header.at("population_range").get<std::array<double, 2>>();
    }
    const auto count = header.at("parameter_count").get<std::size_t>();
    auto params = model.network.parameters();
    const std::size_t params_at = header_at + header_len;
    if (count != params.size() || body.size() - params_at != count * sizeof(float)) {
      fail(ErrorCode::integrity, "model artifact parameter block does not match its config");
    }
    for (std::size_t i = 0; i < count; ++i) {
      float f = 0.0f;
      std::memcpy(&f, body.data() + params_at + i * sizeof(float), sizeof(float));
      params[i] = f;
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::integrity, std::string("model artifact header: ") + e.what());
  }
}

void save_model(const std::string& path, const HPModel& model) {
  dataio::write_file(path, serialize_model(model));
}

HPModel load_model(const std::string& path) {
  try {
    return deserialize_model(dataio::read_file(path));
  } catch (const Error& e) {
    fail(e.code(), path + ": " + e.what());
  }
}

std::string artifact_name(Indicator ind) { return "model_" + std::string(to_string(ind)) + ".hpm"; }

nlohmann::json PredictionSet::to_json() const {
  nlohmann::json out = {{"ids", ids}};
  for (std::size_t k = 0; k < kIndicatorCount; ++k) {
    const std::string name(to_string(kIndicators[k]));
    out["probability"][name] = probability[k];
    out["normalized"][name] = normalized[k];
  }
  return out;
}

std::vector<double> minmax_normalize(std::span<const double> values) {
  if (values.empty()) return {};
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return dataio::minmax_scale(values, *lo, *hi);
}

PredictionSet predict_and_normalize(std::span<const HPModel* const> models,
                                    const dataio::Dataset& dataset) {
  if (models.size() != kIndicatorCount) {
    fail(ErrorCode::argument, "predict_and_normalize needs six models, got " + std::to_string(models.size()));
  }
  for (std::size_t k = 0; k < kIndicatorCount; ++k) {
    if (models[k] == nullptr) fail(ErrorCode::state, "missing model for " + std::string(to_string(kIndicators[k])));
    models[k]->require_trained();
    if (models[k]->indicator != kIndicators[k]) {
      fail(ErrorCode::argument, "model slot " + std::string(to_string(kIndicators[k])) + " holds a " +
                                    std::string(to_string(models[k]->indicator)) + " model");
    }
  }
  PredictionSet set;
  for (const auto& p : dataset.participants) set.ids.push_back(p.id);
  for (std::size_t k = 0; k < kIndicatorCount; ++k) {
    set.probability[k].reserve(dataset.participants.size());
    for (const auto& p : dataset.participants) set.probability[k].push_back(models[k]->predict(p));
    set.normalized[k] = minmax_normalize(set.probability[k]);
  }
  return set;
}

}  // namespace healthprism::model
