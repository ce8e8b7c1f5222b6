#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace dat::plot {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  bool points = false;  // markers instead of a polyline
};

struct Axes {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  bool equal_aspect = false;
};

// Static SVG chart with linear axes and a legend.
std::string chart(const Axes& axes, const std::vector<Series>& series);

// Bars of accuracy per confidence bin against the diagonal.
std::string reliability(const std::vector<double>& bin_upper, const std::vector<double>& accuracy,
                        const std::vector<double>& confidence, const std::string& title);

void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace dat::plot
