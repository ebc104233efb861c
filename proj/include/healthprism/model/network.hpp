#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "healthprism/model/gate.hpp"
#include "healthprism/random.hpp"

namespace healthprism::model {

using ColMatrix = Eigen::MatrixXd;

struct ConvBlock {
  int out_channels = 0;
  int kernel = 0;
  int pool = 0;
};

enum class Streams { both, context_only, motion_only };

std::string to_string(Streams streams);
Streams parse_streams(const std::string& name);

struct ModelConfig {
  int context_length = 50;
  int motion_channels = 3;
  int motion_length = 10080;
  int context_embed_dim = 64;
  int motion_embed_dim = 64;
  // Output width of each context encoder layer; the last equals context_embed_dim.
  std::vector<int> context_encoder_layers{128, 64};
  std::vector<ConvBlock> motion_cnn_blocks{{8, 7, 4}, {16, 7, 4}, {32, 7, 4}};
  int group_norm_groups = 1;
  int gru_hidden = 64;
  // Output width of each head layer; the last must be 1.
  std::vector<int> head_layers{64, 1};
  double dropout_rate = 0.2;
  bool use_gates = true;
  bool gate_relu = false;
  Streams streams = Streams::both;
  std::uint64_t seed = 0;

  bool uses_context() const { return streams != Streams::motion_only; }
  bool uses_motion() const { return streams != Streams::context_only; }
  int head_input_width() const;
  // Sequence length entering the GRU.
  int gru_steps() const;

  void validate() const;

  nlohmann::json to_json() const;
  // Missing keys keep their defaults.
  static ModelConfig from_json(const nlohmann::json& j);
};

struct ParamGroup {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
};

struct SampleView {
  std::span<const double> context;
  // Channel-major, motion_channels x motion_length.
  std::span<const float> motion;
};

enum class Mode { inference, training };

// Activations recorded by a forward pass and consumed by backward().
// Reusing one workspace across samples avoids reallocating the large
// im2col buffers.
struct Workspace {
  struct Dense {
    Eigen::VectorXd input;
    Eigen::VectorXd pre;
    Eigen::VectorXd out;
    Eigen::VectorXd mask;
  };
  struct Conv {
    RowMatrix activated;  // post-ReLU, pre-pool
    RowMatrix pooled;
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> argmax;
  };
  struct Norm {
    RowMatrix normalized;
    std::vector<double> inv_std;
    RowMatrix out;
  };

  Eigen::VectorXd context_in;
  Eigen::VectorXd context_gate_pre;
  Eigen::VectorXd context_gate;
  Eigen::VectorXd context_gated;
  std::vector<Dense> context_layers;

  RowMatrix motion_in;
  RowMatrix motion_gate_pre;
  RowMatrix motion_gate;
  RowMatrix motion_gated;
  Norm norm_in;
  std::vector<Conv> convs;
  Norm norm_out;
  ColMatrix gru_r;
  ColMatrix gru_z;
  ColMatrix gru_n;
  ColMatrix gru_hn;
  ColMatrix gru_h;  // hidden x (steps + 1), column 0 is the zero state

  Eigen::VectorXd head_in;
  std::vector<Dense> head_layers;
  double logit = 0.0;
};

class Network {
 public:
  explicit Network(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }
  const ParamGroup& group(const std::string& name) const;
  bool has_group(const std::string& name) const;

  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  // Glorot-uniform weights, zero biases, identity norms, and gate
  // parameters at zero so every initial importance is 0.5.
  void initialize(std::uint64_t seed);

  // Returns the pre-sigmoid output. In training mode the dropout masks are
  // drawn from dropout_seed, so equal seeds give equal masks.
  double forward(const SampleView& sample, Mode mode, std::uint64_t dropout_seed,
                 Workspace& ws) const;

  double probability(const SampleView& sample) const;

  // Accumulates d(loss)/d(params) into grad given d(loss)/d(logit).
  void backward(const Workspace& ws, double dlogit, std::span<double> grad) const;

  // Inference-mode pieces of forward(); composing them reproduces
  // forward() bit for bit.
  Eigen::VectorXd context_embedding(std::span<const double> context) const;
  Eigen::VectorXd motion_embedding(std::span<const float> motion) const;
  double head_logit(const Eigen::VectorXd& context_embedding,
                    const Eigen::VectorXd& motion_embedding) const;

  GateLayer context_gate() const;
  GateLayer motion_gate() const;

 private:
  struct DenseIdx {
    std::size_t weight;
    std::size_t bias;
  };

  void build_layout();
  std::size_t add_group(const std::string& name, std::size_t rows, std::size_t cols);
  Eigen::Map<const RowMatrix> matrix(std::size_t group_index) const;
  Eigen::Map<const Eigen::VectorXd> vector(std::size_t group_index) const;

  void check_sample(const SampleView& sample) const;
  void check_context(std::size_t size) const;
  void check_motion(std::size_t size) const;
  void forward_context(std::span<const double> context, Rng* dropout, Workspace& ws) const;
  void forward_motion(std::span<const float> motion, Workspace& ws) const;
  void forward_head(Rng* dropout, Workspace& ws) const;
  void dense_forward(const std::vector<DenseIdx>& layers, const Eigen::VectorXd& input,
                     bool last_linear, Rng* dropout, std::vector<Workspace::Dense>& out) const;
  Eigen::VectorXd dense_backward(const std::vector<DenseIdx>& layers,
                                 const std::vector<Workspace::Dense>& cache,
                                 Eigen::VectorXd d_out, bool last_linear,
                                 std::span<double> grad) const;
  void motion_backward(const Workspace& ws, const Eigen::VectorXd& d_embedding,
                       std::span<double> grad) const;

  ModelConfig config_;
  std::vector<ParamGroup> groups_;
  std::vector<double> params_;

  // Indices into groups_; -1 when the stream or gate is disabled.
  long context_gate_w_ = -1, context_gate_b_ = -1;
  long motion_gate_w_ = -1, motion_gate_b_ = -1;
  std::vector<DenseIdx> context_layers_;
  std::size_t norm_in_gamma_ = 0, norm_in_beta_ = 0;
  std::vector<DenseIdx> convs_;
  std::size_t norm_out_gamma_ = 0, norm_out_beta_ = 0;
  std::size_t gru_w_ih_ = 0, gru_w_hh_ = 0, gru_b_ih_ = 0, gru_b_hh_ = 0;
  std::vector<DenseIdx> head_;
};

double sigmoid(double a);

}  // namespace healthprism::model
