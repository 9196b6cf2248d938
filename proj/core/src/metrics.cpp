#include "asf/metrics.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace asf {

double average_precision(const std::vector<double>& scores,
                         const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size())
    throw DimensionError("AP: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
  const std::size_t n_pos =
      static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (n_pos == 0) throw ContractError("AP undefined without positives");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&scores](std::size_t a, std::size_t b) {
                     return scores[a] > scores[b];
                   });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  return sum / static_cast<double>(n_pos);
}

EvalReport mean_average_precision(
    const std::vector<std::vector<double>>& scores,
    const std::vector<std::vector<std::uint8_t>>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw DimensionError("mAP: score/label row count mismatch or empty");
  const std::size_t a = scores[0].size();
  EvalReport report;
  report.ap.assign(a, std::numeric_limits<double>::quiet_NaN());
  report.positives.assign(a, 0);

  std::vector<double> col_scores(scores.size());
  std::vector<std::uint8_t> col_labels(scores.size());
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t act = 0; act < a; ++act) {
    for (std::size_t v = 0; v < scores.size(); ++v) {
      if (scores[v].size() != a || labels[v].size() != a)
        throw DimensionError("mAP: ragged score/label matrix");
      col_scores[v] = scores[v][act];
      col_labels[v] = labels[v][act];
      report.positives[act] += labels[v][act];
    }
    if (report.positives[act] == 0) {
      report.warnings.push_back("activity " + std::to_string(act) +
                                " has no positives; excluded from mAP");
      continue;
    }
    report.ap[act] = average_precision(col_scores, col_labels);
    total += report.ap[act];
    ++counted;
  }
  if (counted == 0) throw ContractError("mAP: no activity has positives");
  report.map = total / static_cast<double>(counted);
  return report;
}

}  // namespace asf
