#include "healthprism/model/gate.hpp"

#include <cmath>
#include <string>

#include "healthprism/common.hpp"

namespace healthprism::model {

namespace {

double stable_sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

}  // namespace

void gate_channel(double w, double b, bool relu, std::span<const double> x,
                  std::span<double> pre, std::span<double> weights) {
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double a = w * x[t] + b;
    pre[t] = a;
    weights[t] = stable_sigmoid(relu && a < 0.0 ? 0.0 : a);
  }
}

GateOutput gate_apply(const GateLayer& gate, const RowMatrix& x) {
  if (gate.bias.size() != gate.weight.size()) {
    fail(ErrorCode::shape, "gate weight/bias channel counts differ");
  }
  if (static_cast<std::size_t>(x.rows()) != gate.channels()) {
    fail(ErrorCode::shape, "gate expects " + std::to_string(gate.channels()) +
                               " channels, input has " + std::to_string(x.rows()));
  }
  GateOutput out{RowMatrix(x.rows(), x.cols()), RowMatrix(x.rows(), x.cols())};
  std::vector<double> pre(static_cast<std::size_t>(x.cols()));
  const auto cols = static_cast<std::size_t>(x.cols());
  for (Eigen::Index c = 0; c < x.rows(); ++c) {
    const auto ci = static_cast<std::size_t>(c);
    gate_channel(gate.weight[ci], gate.bias[ci], gate.relu,
                 std::span<const double>(x.row(c).data(), cols), pre,
                 std::span<double>(out.weights.row(c).data(), cols));
  }
  out.gated = x.cwiseProduct(out.weights);
  return out;
}

}  // namespace healthprism::model
