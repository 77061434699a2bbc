#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gsr/data.hpp"

namespace gsr {

/// A CSV written by RunLog: '#' metadata lines, a header row, numeric rows.
struct Table {
  std::map<std::string, std::string> metadata;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  bool has(const std::string& column) const;
  std::size_t index(const std::string& column) const;  // throws if missing
  std::vector<double> column(const std::string& name) const;
};

Table read_table(const std::filesystem::path& path);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  bool log_y = false;
};

std::string render_line_plot(const LinePlot& plot);

struct HeatmapPanel {
  std::string title;
  std::size_t n = 0;          // n x n grid
  std::vector<double> values;  // row-major
};

/// Panels share a symmetric color scale centred at zero.
std::string render_heatmaps(const std::string& title, const std::vector<HeatmapPanel>& panels);

struct ScatterPanel {
  std::string title;
  std::vector<Point2> points;
  Point2 centre = Point2::Zero();
  double ref_radius = 0.0;  // drawn as a circle when positive
};

std::string render_scatter(const std::string& title, const std::vector<ScatterPanel>& panels);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace gsr
