#pragma once

#include <cstdint>
#include <span>

namespace healthprism::model {

// P(score of a random positive > score of a random negative), ties 0.5.
// Computed from average ranks in O(n log n); the numerator is the exact
// pair count, so the result matches direct pair counting bit for bit.
double evaluate_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

double mean_auc(std::span<const double> aucs);

}  // namespace healthprism::model
