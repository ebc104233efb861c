#include "healthprism/model/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "healthprism/common.hpp"

namespace healthprism::model {

namespace {

constexpr double kNormEpsilon = 1e-5;

using IntRowMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void norm_forward(const RowMatrix& x, int groups, const Eigen::Map<const Eigen::VectorXd>& gamma,
                  const Eigen::Map<const Eigen::VectorXd>& beta, Workspace::Norm& n) {
  const Eigen::Index channels = x.rows();
  const Eigen::Index per_group = channels / groups;
  n.normalized.resize(channels, x.cols());
  n.out.resize(channels, x.cols());
  n.inv_std.assign(static_cast<std::size_t>(groups), 0.0);
  for (int g = 0; g < groups; ++g) {
    const auto block = x.middleRows(g * per_group, per_group);
    const double count = static_cast<double>(block.size());
    const double mean = block.sum() / count;
    const double var = (block.array() - mean).square().sum() / count;
    const double inv_std = 1.0 / std::sqrt(var + kNormEpsilon);
    n.inv_std[static_cast<std::size_t>(g)] = inv_std;
    n.normalized.middleRows(g * per_group, per_group) = (block.array() - mean) * inv_std;
  }
  for (Eigen::Index c = 0; c < channels; ++c) {
    n.out.row(c) = n.normalized.row(c).array() * gamma(c) + beta(c);
  }
}

RowMatrix norm_backward(const Workspace::Norm& n, const RowMatrix& dy, int groups,
                        const Eigen::Map<const Eigen::VectorXd>& gamma, double* dgamma,
                        double* dbeta) {
  const Eigen::Index channels = dy.rows();
  const Eigen::Index per_group = channels / groups;
  RowMatrix dxhat(channels, dy.cols());
  for (Eigen::Index c = 0; c < channels; ++c) {
    dgamma[c] += dy.row(c).dot(n.normalized.row(c));
    dbeta[c] += dy.row(c).sum();
    dxhat.row(c) = dy.row(c) * gamma(c);
  }
  RowMatrix dx(channels, dy.cols());
  for (int g = 0; g < groups; ++g) {
    const auto dblock = dxhat.middleRows(g * per_group, per_group);
    const auto xblock = n.normalized.middleRows(g * per_group, per_group);
    const double count = static_cast<double>(dblock.size());
    const double sum_d = dblock.sum();
    const double sum_dx = dblock.cwiseProduct(xblock).sum();
    const double inv_std = n.inv_std[static_cast<std::size_t>(g)];
    dx.middleRows(g * per_group, per_group) =
        (inv_std / count) * (count * dblock.array() - sum_d - xblock.array() * sum_dx);
  }
  return dx;
}

void conv_forward(const RowMatrix& x, const Eigen::Map<const RowMatrix>& weight,
                  const Eigen::Map<const Eigen::VectorXd>& bias, const ConvBlock& block,
                  Workspace::Conv& c) {
  const Eigen::Index in_channels = x.rows();
  const Eigen::Index length = x.cols();
  const int k = block.kernel;
  const int pad = (k - 1) / 2;
  const Eigen::Index out_channels = weight.rows();
  c.activated.resize(out_channels, length);
  c.activated.colwise() = bias;
  for (Eigen::Index co = 0; co < out_channels; ++co) {
    auto out = c.activated.row(co);
    for (Eigen::Index ci = 0; ci < in_channels; ++ci) {
      for (int j = 0; j < k; ++j) {
        const Eigen::Index shift = j - pad;
        const Eigen::Index begin = std::max<Eigen::Index>(0, -shift);
        const Eigen::Index end = std::min<Eigen::Index>(length, length - shift);
        out.segment(begin, end - begin) +=
            weight(co, ci * k + j) * x.row(ci).segment(begin + shift, end - begin);
      }
    }
  }
  c.activated = c.activated.cwiseMax(0.0);

  const Eigen::Index out_len = length / block.pool;
  c.pooled.resize(out_channels, out_len);
  c.argmax.resize(out_channels, out_len);
  for (Eigen::Index co = 0; co < out_channels; ++co) {
    const double* row = c.activated.row(co).data();
    for (Eigen::Index s = 0; s < out_len; ++s) {
      Eigen::Index best = s * block.pool;
      for (Eigen::Index t = best + 1; t < (s + 1) * block.pool; ++t) {
        if (row[t] > row[best]) best = t;
      }
      c.pooled(co, s) = row[best];
      c.argmax(co, s) = static_cast<int>(best);
    }
  }
}

RowMatrix conv_backward(const Workspace::Conv& c, const RowMatrix& input, const RowMatrix& d_pooled,
                        const Eigen::Map<const RowMatrix>& weight, const ConvBlock& block,
                        Eigen::Index in_channels, double* dweight, double* dbias) {
  const Eigen::Index out_channels = c.activated.rows();
  const Eigen::Index length = c.activated.cols();
  RowMatrix d_act = RowMatrix::Zero(out_channels, length);
  for (Eigen::Index co = 0; co < out_channels; ++co) {
    for (Eigen::Index s = 0; s < d_pooled.cols(); ++s) {
      const int t = c.argmax(co, s);
      if (c.activated(co, t) > 0.0) d_act(co, t) += d_pooled(co, s);
    }
  }
  const int k = block.kernel;
  const int pad = (k - 1) / 2;
  Eigen::Map<RowMatrix> dw(dweight, out_channels, in_channels * k);
  Eigen::Map<Eigen::VectorXd> db(dbias, out_channels);
  db += d_act.rowwise().sum();
  RowMatrix dx = RowMatrix::Zero(in_channels, length);
  for (Eigen::Index co = 0; co < out_channels; ++co) {
    const auto d_row = d_act.row(co);
    for (Eigen::Index ci = 0; ci < in_channels; ++ci) {
      auto dx_row = dx.row(ci);
      const auto x_row = input.row(ci);
      for (int j = 0; j < k; ++j) {
        const Eigen::Index shift = j - pad;
        const Eigen::Index begin = std::max<Eigen::Index>(0, -shift);
        const Eigen::Index n = std::min<Eigen::Index>(length, length - shift) - begin;
        dw(co, ci * k + j) += d_row.segment(begin, n).dot(x_row.segment(begin + shift, n));
        dx_row.segment(begin + shift, n) += weight(co, ci * k + j) * d_row.segment(begin, n);
      }
    }
  }
  return dx;
}

template <typename Derived>
auto sigmoid_array(const Eigen::ArrayBase<Derived>& a) {
  return 1.0 / (1.0 + (-a).exp());
}

}  // namespace

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

std::string to_string(Streams streams) {
  switch (streams) {
    case Streams::both: return "both";
    case Streams::context_only: return "context_only";
    case Streams::motion_only: return "motion_only";
  }
  return "both";
}

Streams parse_streams(const std::string& name) {
  if (name == "both") return Streams::both;
  if (name == "context_only") return Streams::context_only;
  if (name == "motion_only") return Streams::motion_only;
  fail(ErrorCode::config, "unknown streams value '" + name + "'");
}

int ModelConfig::head_input_width() const {
  return (uses_context() ? context_embed_dim : 0) + (uses_motion() ? motion_embed_dim : 0);
}

int ModelConfig::gru_steps() const {
  int length = motion_length;
  for (const auto& block : motion_cnn_blocks) length /= std::max(block.pool, 1);
  return length;
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::config, "invalid model config: " + what);
  };
  require(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout_rate must lie in [0, 1)");
  require(!head_layers.empty() && head_layers.back() == 1, "head_layers must end with width 1");
  for (int w : head_layers) require(w >= 1, "head widths must be >= 1");
  if (uses_context()) {
    require(context_length >= 1, "context_length must be >= 1");
    require(!context_encoder_layers.empty(), "context_encoder_layers must be nonempty");
    for (int w : context_encoder_layers) require(w >= 1, "context encoder widths must be >= 1");
    require(context_encoder_layers.back() == context_embed_dim,
            "last context encoder width must equal context_embed_dim");
  }
  if (uses_motion()) {
    require(motion_channels >= 1 && motion_length >= 1, "motion shape must be positive");
    require(!motion_cnn_blocks.empty(), "motion_cnn_blocks must be nonempty");
    for (const auto& b : motion_cnn_blocks) {
      require(b.out_channels >= 1, "conv out_channels must be >= 1");
      require(b.kernel >= 1 && b.kernel % 2 == 1, "conv kernel must be odd and >= 1");
      require(b.pool >= 1, "pool must be >= 1");
    }
    require(gru_steps() >= 1, "motion sequence pooled away to zero length");
    require(group_norm_groups >= 1 && motion_channels % group_norm_groups == 0 &&
                motion_cnn_blocks.back().out_channels % group_norm_groups == 0,
            "group_norm_groups must divide the normalized channel counts");
    require(gru_hidden >= 1 && gru_hidden == motion_embed_dim,
            "gru_hidden must equal motion_embed_dim");
  }
}

Network::Network(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  build_layout();
  initialize(config_.seed);
}

std::size_t Network::add_group(const std::string& name, std::size_t rows, std::size_t cols) {
  const std::size_t offset = groups_.empty() ? 0 : groups_.back().offset + groups_.back().size();
  groups_.push_back(ParamGroup{name, offset, rows, cols});
  return groups_.size() - 1;
}

void Network::build_layout() {
  const auto u = [](int v) { return static_cast<std::size_t>(v); };
  if (config_.uses_context()) {
    if (config_.use_gates) {
      context_gate_w_ = static_cast<long>(add_group("context_gate.weight", 1, 1));
      context_gate_b_ = static_cast<long>(add_group("context_gate.bias", 1, 1));
    }
    int in = config_.context_length;
    for (std::size_t i = 0; i < config_.context_encoder_layers.size(); ++i) {
      const int out = config_.context_encoder_layers[i];
      const std::string prefix = "context_encoder." + std::to_string(i);
      const auto w = add_group(prefix + ".weight", u(out), u(in));
      const auto b = add_group(prefix + ".bias", u(out), 1);
      context_layers_.push_back({w, b});
      in = out;
    }
  }
  if (config_.uses_motion()) {
    const auto channels = u(config_.motion_channels);
    if (config_.use_gates) {
      motion_gate_w_ = static_cast<long>(add_group("motion_gate.weight", channels, 1));
      motion_gate_b_ = static_cast<long>(add_group("motion_gate.bias", channels, 1));
    }
    norm_in_gamma_ = add_group("motion_norm_in.gamma", channels, 1);
    norm_in_beta_ = add_group("motion_norm_in.beta", channels, 1);
    int in = config_.motion_channels;
    for (std::size_t i = 0; i < config_.motion_cnn_blocks.size(); ++i) {
      const auto& block = config_.motion_cnn_blocks[i];
      const std::string prefix = "motion_conv." + std::to_string(i);
      const auto w = add_group(prefix + ".weight", u(block.out_channels), u(in * block.kernel));
      const auto b = add_group(prefix + ".bias", u(block.out_channels), 1);
      convs_.push_back({w, b});
      in = block.out_channels;
    }
    norm_out_gamma_ = add_group("motion_norm_out.gamma", u(in), 1);
    norm_out_beta_ = add_group("motion_norm_out.beta", u(in), 1);
    const auto hidden = u(config_.gru_hidden);
    gru_w_ih_ = add_group("gru.weight_ih", 3 * hidden, u(in));
    gru_w_hh_ = add_group("gru.weight_hh", 3 * hidden, hidden);
    gru_b_ih_ = add_group("gru.bias_ih", 3 * hidden, 1);
    gru_b_hh_ = add_group("gru.bias_hh", 3 * hidden, 1);
  }
  int in = config_.head_input_width();
  for (std::size_t i = 0; i < config_.head_layers.size(); ++i) {
    const int out = config_.head_layers[i];
    const std::string prefix = "head." + std::to_string(i);
    const auto w = add_group(prefix + ".weight", u(out), u(in));
    const auto b = add_group(prefix + ".bias", u(out), 1);
    head_.push_back({w, b});
    in = out;
  }
  params_.assign(groups_.back().offset + groups_.back().size(), 0.0);
}

const ParamGroup& Network::group(const std::string& name) const {
  for (const auto& g : groups_) {
    if (g.name == name) return g;
  }
  fail(ErrorCode::argument, "no parameter group named '" + name + "'");
}

bool Network::has_group(const std::string& name) const {
  return std::any_of(groups_.begin(), groups_.end(),
                     [&](const ParamGroup& g) { return g.name == name; });
}

void Network::initialize(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x1417));
  std::fill(params_.begin(), params_.end(), 0.0);
  auto glorot = [&](std::size_t index, double fan_in, double fan_out) {
    const auto& g = groups_[index];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::size_t i = 0; i < g.size(); ++i) params_[g.offset + i] = rng.uniform(-limit, limit);
  };
  auto fill = [&](std::size_t index, double value) {
    const auto& g = groups_[index];
    std::fill_n(params_.begin() + static_cast<long>(g.offset), g.size(), value);
  };
  for (const auto& layer : context_layers_) {
    const auto& g = groups_[layer.weight];
    glorot(layer.weight, static_cast<double>(g.cols), static_cast<double>(g.rows));
  }
  if (config_.uses_motion()) {
    fill(norm_in_gamma_, 1.0);
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      const auto& g = groups_[convs_[i].weight];
      const double k = config_.motion_cnn_blocks[i].kernel;
      const double in = static_cast<double>(g.cols) / k;
      glorot(convs_[i].weight, in * k, static_cast<double>(g.rows) * k);
    }
    fill(norm_out_gamma_, 1.0);
    for (std::size_t index : {gru_w_ih_, gru_w_hh_}) {
      const auto& g = groups_[index];
      glorot(index, static_cast<double>(g.cols), static_cast<double>(g.rows));
    }
  }
  for (const auto& layer : head_) {
    const auto& g = groups_[layer.weight];
    glorot(layer.weight, static_cast<double>(g.cols), static_cast<double>(g.rows));
  }
}

Eigen::Map<const RowMatrix> Network::matrix(std::size_t index) const {
  const auto& g = groups_[index];
  return {params_.data() + g.offset, static_cast<Eigen::Index>(g.rows),
          static_cast<Eigen::Index>(g.cols)};
}

Eigen::Map<const Eigen::VectorXd> Network::vector(std::size_t index) const {
  const auto& g = groups_[index];
  return {params_.data() + g.offset, static_cast<Eigen::Index>(g.size())};
}

GateLayer Network::context_gate() const {
  if (!config_.uses_context() || !config_.use_gates) {
    fail(ErrorCode::state, "model has no context gate");
  }
  return GateLayer{{params_[groups_[static_cast<std::size_t>(context_gate_w_)].offset]},
                   {params_[groups_[static_cast<std::size_t>(context_gate_b_)].offset]},
                   config_.gate_relu};
}

GateLayer Network::motion_gate() const {
  if (!config_.uses_motion() || !config_.use_gates) {
    fail(ErrorCode::state, "model has no motion gate");
  }
  const auto w = vector(static_cast<std::size_t>(motion_gate_w_));
  const auto b = vector(static_cast<std::size_t>(motion_gate_b_));
  return GateLayer{std::vector<double>(w.begin(), w.end()),
                   std::vector<double>(b.begin(), b.end()), config_.gate_relu};
}

void Network::check_context(std::size_t size) const {
  if (config_.uses_context() && size != static_cast<std::size_t>(config_.context_length)) {
    fail(ErrorCode::shape, "context input has length " + std::to_string(size) + ", model expects " +
                               std::to_string(config_.context_length));
  }
}

void Network::check_motion(std::size_t size) const {
  const auto motion_size =
      static_cast<std::size_t>(config_.motion_channels) * static_cast<std::size_t>(config_.motion_length);
  if (config_.uses_motion() && size != motion_size) {
    fail(ErrorCode::shape, "motion input has " + std::to_string(size) + " values, model expects " +
                               std::to_string(config_.motion_channels) + "x" +
                               std::to_string(config_.motion_length));
  }
}

void Network::check_sample(const SampleView& sample) const {
  check_context(sample.context.size());
  check_motion(sample.motion.size());
}

void Network::dense_forward(const std::vector<DenseIdx>& layers, const Eigen::VectorXd& input,
                            bool last_linear, Rng* dropout,
                            std::vector<Workspace::Dense>& out) const {
  out.resize(layers.size());
  const double keep = 1.0 - config_.dropout_rate;
  const Eigen::VectorXd* in = &input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& d = out[i];
    d.input = *in;
    d.pre.noalias() = matrix(layers[i].weight) * d.input;
    d.pre += vector(layers[i].bias);
    if (last_linear && i + 1 == layers.size()) {
      d.mask.setOnes(d.pre.size());
      d.out = d.pre;
    } else {
      d.mask.resize(d.pre.size());
      for (Eigen::Index j = 0; j < d.mask.size(); ++j) {
        d.mask(j) = dropout == nullptr ? 1.0 : (dropout->bernoulli(keep) ? 1.0 / keep : 0.0);
      }
      d.out = d.pre.cwiseMax(0.0).cwiseProduct(d.mask);
    }
    in = &d.out;
  }
}

Eigen::VectorXd Network::dense_backward(const std::vector<DenseIdx>& layers,
                                        const std::vector<Workspace::Dense>& cache,
                                        Eigen::VectorXd d_out, bool last_linear,
                                        std::span<double> grad) const {
  for (std::size_t i = layers.size(); i-- > 0;) {
    const auto& d = cache[i];
    Eigen::VectorXd d_pre = d_out;
    if (!(last_linear && i + 1 == layers.size())) {
      d_pre = d_out.cwiseProduct(d.mask).cwiseProduct(
          (d.pre.array() > 0.0).cast<double>().matrix());
    }
    const auto& gw = groups_[layers[i].weight];
    const auto& gb = groups_[layers[i].bias];
    Eigen::Map<RowMatrix> dw(grad.data() + gw.offset, static_cast<Eigen::Index>(gw.rows),
                             static_cast<Eigen::Index>(gw.cols));
    dw.noalias() += d_pre * d.input.transpose();
    Eigen::Map<Eigen::VectorXd>(grad.data() + gb.offset, d_pre.size()) += d_pre;
    d_out = matrix(layers[i].weight).transpose() * d_pre;
  }
  return d_out;
}

void Network::forward_context(std::span<const double> context, Rng* dropout,
                              Workspace& ws) const {
  ws.context_in = Eigen::Map<const Eigen::VectorXd>(context.data(),
                                                    static_cast<Eigen::Index>(context.size()));
  if (config_.use_gates) {
    const double w = params_[groups_[static_cast<std::size_t>(context_gate_w_)].offset];
    const double b = params_[groups_[static_cast<std::size_t>(context_gate_b_)].offset];
    ws.context_gate_pre.resize(ws.context_in.size());
    ws.context_gate.resize(ws.context_in.size());
    gate_channel(w, b, config_.gate_relu, {ws.context_in.data(), context.size()},
                 {ws.context_gate_pre.data(), context.size()},
                 {ws.context_gate.data(), context.size()});
    ws.context_gated = ws.context_in.cwiseProduct(ws.context_gate);
  } else {
    ws.context_gated = ws.context_in;
  }
  dense_forward(context_layers_, ws.context_gated, false, dropout, ws.context_layers);
}

void Network::forward_motion(std::span<const float> motion, Workspace& ws) const {
  const auto channels = static_cast<Eigen::Index>(config_.motion_channels);
  const auto length = static_cast<Eigen::Index>(config_.motion_length);
  using FloatRowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  ws.motion_in = Eigen::Map<const FloatRowMatrix>(motion.data(), channels, length).cast<double>();
  if (config_.use_gates) {
    const auto w = vector(static_cast<std::size_t>(motion_gate_w_));
    const auto b = vector(static_cast<std::size_t>(motion_gate_b_));
    ws.motion_gate_pre.resize(channels, length);
    ws.motion_gate.resize(channels, length);
    const auto n = static_cast<std::size_t>(length);
    for (Eigen::Index c = 0; c < channels; ++c) {
      gate_channel(w(c), b(c), config_.gate_relu, {ws.motion_in.row(c).data(), n},
                   {ws.motion_gate_pre.row(c).data(), n}, {ws.motion_gate.row(c).data(), n});
    }
    ws.motion_gated = ws.motion_in.cwiseProduct(ws.motion_gate);
  } else {
    ws.motion_gated = ws.motion_in;
  }
  norm_forward(ws.motion_gated, config_.group_norm_groups, vector(norm_in_gamma_),
               vector(norm_in_beta_), ws.norm_in);
  ws.convs.resize(convs_.size());
  const RowMatrix* x = &ws.norm_in.out;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    conv_forward(*x, matrix(convs_[i].weight), vector(convs_[i].bias),
                 config_.motion_cnn_blocks[i], ws.convs[i]);
    x = &ws.convs[i].pooled;
  }
  norm_forward(*x, config_.group_norm_groups, vector(norm_out_gamma_), vector(norm_out_beta_),
               ws.norm_out);

  const Eigen::Index hidden = config_.gru_hidden;
  const Eigen::Index steps = ws.norm_out.out.cols();
  ColMatrix input_proj = matrix(gru_w_ih_) * ws.norm_out.out;
  input_proj.colwise() += vector(gru_b_ih_);
  const auto w_hh = matrix(gru_w_hh_);
  const auto b_hh = vector(gru_b_hh_);
  ws.gru_r.resize(hidden, steps);
  ws.gru_z.resize(hidden, steps);
  ws.gru_n.resize(hidden, steps);
  ws.gru_hn.resize(hidden, steps);
  ws.gru_h.resize(hidden, steps + 1);
  ws.gru_h.col(0).setZero();
  Eigen::VectorXd hh(3 * hidden);
  for (Eigen::Index t = 0; t < steps; ++t) {
    hh.noalias() = w_hh * ws.gru_h.col(t);
    hh += b_hh;
    ws.gru_r.col(t) = sigmoid_array((input_proj.col(t).head(hidden) + hh.head(hidden)).array());
    ws.gru_z.col(t) =
        sigmoid_array((input_proj.col(t).segment(hidden, hidden) + hh.segment(hidden, hidden)).array());
    ws.gru_hn.col(t) = hh.tail(hidden);
    ws.gru_n.col(t) = (input_proj.col(t).tail(hidden).array() +
                       ws.gru_r.col(t).array() * hh.tail(hidden).array())
                          .tanh();
    ws.gru_h.col(t + 1) = (1.0 - ws.gru_z.col(t).array()) * ws.gru_n.col(t).array() +
                          ws.gru_z.col(t).array() * ws.gru_h.col(t).array();
  }
}

void Network::forward_head(Rng* dropout, Workspace& ws) const {
  const Eigen::Index ctx = config_.uses_context() ? config_.context_embed_dim : 0;
  const Eigen::Index mot = config_.uses_motion() ? config_.motion_embed_dim : 0;
  ws.head_in.resize(ctx + mot);
  if (ctx > 0) ws.head_in.head(ctx) = ws.context_layers.back().out;
  if (mot > 0) ws.head_in.tail(mot) = ws.gru_h.col(ws.gru_h.cols() - 1);
  dense_forward(head_, ws.head_in, true, dropout, ws.head_layers);
  ws.logit = ws.head_layers.back().out(0);
}

double Network::forward(const SampleView& sample, Mode mode, std::uint64_t dropout_seed,
                        Workspace& ws) const {
  check_sample(sample);
  Rng rng(dropout_seed);
  Rng* dropout = (mode == Mode::training && config_.dropout_rate > 0.0) ? &rng : nullptr;
  if (config_.uses_context()) forward_context(sample.context, dropout, ws);
  if (config_.uses_motion()) forward_motion(sample.motion, ws);
  forward_head(dropout, ws);
  return ws.logit;
}

double Network::probability(const SampleView& sample) const {
  Workspace ws;
  return sigmoid(forward(sample, Mode::inference, 0, ws));
}

Eigen::VectorXd Network::context_embedding(std::span<const double> context) const {
  if (!config_.uses_context()) return {};
  check_context(context.size());
  Workspace ws;
  forward_context(context, nullptr, ws);
  return ws.context_layers.back().out;
}

Eigen::VectorXd Network::motion_embedding(std::span<const float> motion) const {
  if (!config_.uses_motion()) return {};
  check_motion(motion.size());
  Workspace ws;
  forward_motion(motion, ws);
  return ws.gru_h.col(ws.gru_h.cols() - 1);
}

double Network::head_logit(const Eigen::VectorXd& context_embedding,
                           const Eigen::VectorXd& motion_embedding) const {
  Workspace ws;
  if (config_.uses_context()) {
    ws.context_layers.resize(1);
    ws.context_layers.back().out = context_embedding;
  }
  if (config_.uses_motion()) {
    ws.gru_h = motion_embedding;
  }
  forward_head(nullptr, ws);
  return ws.logit;
}

void Network::backward(const Workspace& ws, double dlogit, std::span<double> grad) const {
  if (grad.size() != params_.size()) fail(ErrorCode::shape, "gradient buffer size mismatch");
  Eigen::VectorXd d_out(1);
  d_out(0) = dlogit;
  const Eigen::VectorXd d_head_in = dense_backward(head_, ws.head_layers, d_out, true, grad);
  const Eigen::Index ctx = config_.uses_context() ? config_.context_embed_dim : 0;
  const Eigen::Index mot = config_.uses_motion() ? config_.motion_embed_dim : 0;

  if (ctx > 0) {
    const Eigen::VectorXd d_gated =
        dense_backward(context_layers_, ws.context_layers, d_head_in.head(ctx), false, grad);
    if (config_.use_gates) {
      const auto& gw = groups_[static_cast<std::size_t>(context_gate_w_)];
      const auto& gb = groups_[static_cast<std::size_t>(context_gate_b_)];
      const Eigen::ArrayXd g = ws.context_gate.array();
      Eigen::ArrayXd d_pre = d_gated.array() * ws.context_in.array() * g * (1.0 - g);
      if (config_.gate_relu) d_pre *= (ws.context_gate_pre.array() > 0.0).cast<double>();
      grad[gw.offset] += (d_pre * ws.context_in.array()).sum();
      grad[gb.offset] += d_pre.sum();
    }
  }
  if (mot > 0) motion_backward(ws, d_head_in.tail(mot), grad);
}

void Network::motion_backward(const Workspace& ws, const Eigen::VectorXd& d_embedding,
                              std::span<double> grad) const {
  const Eigen::Index hidden = config_.gru_hidden;
  const Eigen::Index steps = ws.gru_r.cols();
  const auto w_hh = matrix(gru_w_hh_);
  ColMatrix d_input_pre(3 * hidden, steps);
  ColMatrix d_hidden_pre(3 * hidden, steps);
  Eigen::VectorXd dh = d_embedding;
  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    const auto r = ws.gru_r.col(t).array();
    const auto z = ws.gru_z.col(t).array();
    const auto n = ws.gru_n.col(t).array();
    const auto hn = ws.gru_hn.col(t).array();
    const auto h_prev = ws.gru_h.col(t).array();
    const Eigen::ArrayXd dn = dh.array() * (1.0 - z);
    const Eigen::ArrayXd dz = dh.array() * (h_prev - n);
    const Eigen::ArrayXd da_n = dn * (1.0 - n.square());
    const Eigen::ArrayXd da_r = da_n * hn * r * (1.0 - r);
    const Eigen::ArrayXd da_z = dz * z * (1.0 - z);
    d_input_pre.col(t).head(hidden) = da_r.matrix();
    d_input_pre.col(t).segment(hidden, hidden) = da_z.matrix();
    d_input_pre.col(t).tail(hidden) = da_n.matrix();
    d_hidden_pre.col(t).head(hidden) = da_r.matrix();
    d_hidden_pre.col(t).segment(hidden, hidden) = da_z.matrix();
    d_hidden_pre.col(t).tail(hidden) = (da_n * r).matrix();
    dh = (w_hh.transpose() * d_hidden_pre.col(t)).array() + dh.array() * z;
  }
  auto grad_matrix = [&](std::size_t index) {
    const auto& g = groups_[index];
    return Eigen::Map<RowMatrix>(grad.data() + g.offset, static_cast<Eigen::Index>(g.rows),
                                 static_cast<Eigen::Index>(g.cols));
  };
  auto grad_vector = [&](std::size_t index) {
    const auto& g = groups_[index];
    return Eigen::Map<Eigen::VectorXd>(grad.data() + g.offset, static_cast<Eigen::Index>(g.size()));
  };
  grad_matrix(gru_w_ih_).noalias() += d_input_pre * ws.norm_out.out.transpose();
  grad_vector(gru_b_ih_) += d_input_pre.rowwise().sum();
  grad_matrix(gru_w_hh_).noalias() += d_hidden_pre * ws.gru_h.leftCols(steps).transpose();
  grad_vector(gru_b_hh_) += d_hidden_pre.rowwise().sum();

  RowMatrix d_x = matrix(gru_w_ih_).transpose() * d_input_pre;
  d_x = norm_backward(ws.norm_out, d_x, config_.group_norm_groups, vector(norm_out_gamma_),
                      grad.data() + groups_[norm_out_gamma_].offset,
                      grad.data() + groups_[norm_out_beta_].offset);
  for (std::size_t i = convs_.size(); i-- > 0;) {
    const Eigen::Index in_channels =
        i == 0 ? config_.motion_channels : config_.motion_cnn_blocks[i - 1].out_channels;
    const RowMatrix& input = i == 0 ? ws.norm_in.out : ws.convs[i - 1].pooled;
    d_x = conv_backward(ws.convs[i], input, d_x, matrix(convs_[i].weight), config_.motion_cnn_blocks[i],
                        in_channels, grad.data() + groups_[convs_[i].weight].offset,
                        grad.data() + groups_[convs_[i].bias].offset);
  }
  d_x = norm_backward(ws.norm_in, d_x, config_.group_norm_groups, vector(norm_in_gamma_),
                      grad.data() + groups_[norm_in_gamma_].offset,
                      grad.data() + groups_[norm_in_beta_].offset);
  if (config_.use_gates) {
    const auto& gw = groups_[static_cast<std::size_t>(motion_gate_w_)];
    const auto& gb = groups_[static_cast<std::size_t>(motion_gate_b_)];
    for (Eigen::Index c = 0; c < d_x.rows(); ++c) {
      const auto x = ws.motion_in.row(c).array();
      const auto g = ws.motion_gate.row(c).array();
      Eigen::Array<double, 1, Eigen::Dynamic> d_pre = d_x.row(c).array() * x * g * (1.0 - g);
      if (config_.gate_relu) d_pre *= (ws.motion_gate_pre.row(c).array() > 0.0).cast<double>();
      grad[gw.offset + static_cast<std::size_t>(c)] += (d_pre * x).sum();
      grad[gb.offset + static_cast<std::size_t>(c)] += d_pre.sum();
    }
  }
}

}  // namespace healthprism::model
