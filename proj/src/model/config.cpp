#include "healthprism/common.hpp"
#include "healthprism/model/network.hpp"

namespace healthprism::model {

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : motion_cnn_blocks) blocks.push_back({b.out_channels, b.kernel, b.pool});
  return {{"context_length", context_length},
          {"motion_channels", motion_channels},
          {"motion_length", motion_length},
          {"context_embed_dim", context_embed_dim},
          {"motion_embed_dim", motion_embed_dim},
          {"context_encoder_layers", context_encoder_layers},
          {"motion_cnn_blocks", blocks},
          {"group_norm_groups", group_norm_groups},
          {"gru_hidden", gru_hidden},
          {"head_layers", head_layers},
          {"dropout_rate", dropout_rate},
          {"use_gates", use_gates},
          {"gate_relu", gate_relu},
          {"streams", to_string(streams)},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.context_length = j.value("context_length", c.context_length);
    c.motion_channels = j.value("motion_channels", c.motion_channels);
    c.motion_length = j.value("motion_length", c.motion_length);
    c.context_embed_dim = j.value("context_embed_dim", c.context_embed_dim);
    c.motion_embed_dim = j.value("motion_embed_dim", c.motion_embed_dim);
    c.context_encoder_layers = j.value("context_encoder_layers", c.context_encoder_layers);
    if (j.contains("motion_cnn_blocks")) {
      c.motion_cnn_blocks.clear();
      for (const auto& b : j.at("motion_cnn_blocks")) {
        if (b.is_object()) {
          c.motion_cnn_blocks.push_back({b.at("out_channels").get<int>(), b.at("kernel").get<int>(),
                                         b.at("pool").get<int>()});
        } else {
          const auto v = b.get<std::vector<int>>();
          if (v.size() != 3) fail(ErrorCode::config, "motion_cnn_blocks entries are [out_channels, kernel, pool]");
          c.motion_cnn_blocks.push_back({v[0], v[1], v[2]});
        }
      }
    }
    c.group_norm_groups = j.value("group_norm_groups", c.group_norm_groups);
    c.gru_hidden = j.value("gru_hidden", c.gru_hidden);
    c.head_layers = j.value("head_layers", c.head_layers);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    c.use_gates = j.value("use_gates", c.use_gates);
    c.gate_relu = j.value("gate_relu", c.gate_relu);
    if (j.contains("streams")) c.streams = parse_streams(j.at("streams").get<std::string>());
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace healthprism::model
