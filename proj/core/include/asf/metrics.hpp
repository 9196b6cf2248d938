#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "asf/error.hpp"

namespace asf {

// Average precision = mean of precision at each positive, scores ranked
// descending with ties broken by stable index order.
double average_precision(const std::vector<double>& scores,
                         const std::vector<std::uint8_t>& labels);

struct EvalReport {
  std::vector<double> ap;              // per activity; NaN where excluded
  std::vector<std::size_t> positives;  // per-activity positive counts
  double map = 0.0;                    // mean over activities with >= 1 positive
  std::vector<std::string> warnings;
};

// scores[v][a], labels[v][a] over videos v and activities a.
EvalReport mean_average_precision(
    const std::vector<std::vector<double>>& scores,
    const std::vector<std::vector<std::uint8_t>>& labels);

}  // namespace asf
