#include "healthprism/model/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "healthprism/common.hpp"

namespace healthprism::model {

double evaluate_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    fail(ErrorCode::evaluation, "scores and labels differ in length (" + std::to_string(scores.size()) +
                                    " vs " + std::to_string(labels.size()) + ")");
  }
  const std::size_t n = scores.size();
  std::size_t positives = 0;
  for (auto y : labels) positives += y != 0;
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    fail(ErrorCode::evaluation, "AUC needs both classes, got " + std::to_string(positives) +
                                    " positive and " + std::to_string(negatives) + " negative");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the rank sum keeps tied (half-integer) ranks integral.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    std::size_t tied_pos = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      tied_pos += labels[order[j]] != 0;
      ++j;
    }
    // ranks i+1 .. j, average (i + 1 + j) / 2
    twice_rank_sum += static_cast<std::uint64_t>(tied_pos) * (i + 1 + j);
    i = j;
  }
  const std::uint64_t twice_pairs = twice_rank_sum - static_cast<std::uint64_t>(positives) * (positives + 1);
  return (static_cast<double>(twice_pairs) / 2.0) /
         (static_cast<double>(positives) * static_cast<double>(negatives));
}

double mean_auc(std::span<const double> aucs) {
  if (aucs.empty()) fail(ErrorCode::evaluation, "mAUC of an empty list");
  double sum = 0.0;
  for (double a : aucs) sum += a;
  return sum / static_cast<double>(aucs.size());
}

}  // namespace healthprism::model
