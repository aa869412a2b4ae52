#pragma once

#include <string>
#include <vector>

namespace nsod::svg {

struct Series {
  std::string label;
  std::vector<double> values;  // one value per category
};

/// Renders a small line chart (numeric x categories) or grouped bar chart
/// (string categories) as standalone SVG markup.
std::string line_chart(const std::string& title,
                       const std::vector<std::string>& categories,
                       const std::vector<Series>& series,
                       const std::string& y_label);

std::string bar_chart(const std::string& title,
                      const std::vector<std::string>& categories,
                      const std::vector<Series>& series,
                      const std::string& y_label);

}  // namespace nsod::svg
