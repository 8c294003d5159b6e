#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace stgan::plot {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Line chart written as a standalone SVG file.
void line_chart(const std::filesystem::path& path, const std::string& title,
                const std::string& x_label, const std::vector<Series>& series);

/// Grouped bar chart: one group per entry of `groups`, one bar per category.
/// `values[g][c]` is the height of category c in group g.
void bar_chart(const std::filesystem::path& path, const std::string& title,
               const std::vector<std::string>& groups, const std::vector<std::string>& categories,
               const std::vector<std::vector<double>>& values);

}  // namespace stgan::plot
