#pragma once

#include <string>

#include "moincl/metrics.hpp"

namespace moincl::cli {

/// Line chart of each task's score against the training step.
std::string score_lines_svg(const ScoreMatrix& m, const std::string& title);
/// Bar chart of per-task forgetting ratios; negative bars point down.
std::string forgetting_bars_svg(const Aggregates& a, const ScoreMatrix& m, const std::string& title);

}  // namespace moincl::cli
