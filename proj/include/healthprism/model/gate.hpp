#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace healthprism::model {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Kernel-1, stride-1 convolution with as many output channels as input
// channels, followed by a sigmoid. Channel c sees only its own weight and
// bias, so the output is an element-wise importance in (0, 1).
struct GateLayer {
  std::vector<double> weight;
  std::vector<double> bias;
  // Inserts a ReLU between the convolution and the sigmoid. Off by default:
  // the ReLU pins every importance to [0.5, 1).
  bool relu = false;

  std::size_t channels() const { return weight.size(); }
};

struct GateOutput {
  RowMatrix gated;
  RowMatrix weights;
};

GateOutput gate_apply(const GateLayer& gate, const RowMatrix& x);

// Writes sigmoid(w * x + b) (optionally through a ReLU) for one channel row.
void gate_channel(double w, double b, bool relu, std::span<const double> x,
                  std::span<double> pre, std::span<double> weights);

}  // namespace healthprism::model
