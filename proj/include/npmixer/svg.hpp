// SPDX-License-Identifier: Apache-2.0
// Minimal standalone SVG line plot of history plus forecast per channel.
#pragma once

#include <string>
#include <vector>

namespace npmixer {

/// One panel per channel: the history as a solid line, the forecast dashed
/// and continuing from the last history step.
std::string forecast_svg(const std::vector<std::string>& channels, const std::vector<std::vector<double>>& history,
                         const std::vector<std::vector<double>>& forecast);

}  // namespace npmixer
