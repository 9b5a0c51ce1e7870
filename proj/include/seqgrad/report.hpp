#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace seqgrad {

struct LineSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct ChartOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
  int width = 640;
  int height = 400;
};

/// Standalone SVG with axes, tick labels, one polyline per series and a
/// legend. Non-positive values are clamped to the smallest positive value
/// on a log axis.
void write_line_chart_svg(std::span<const LineSeries> series, const ChartOptions& opts, std::ostream& out);

std::string xml_escape(std::string_view s);

/// One finished run's final test metrics.
struct CompareRow {
  std::string strategy;
  std::string seed;
  double cider_d = 0.0;
  double bleu4 = 0.0;
};

/// Data rows grouped by strategy in order of first appearance, then one
/// `mean` row per strategy holding the arithmetic mean of its rows.
std::vector<CompareRow> compare_table(std::span<const CompareRow> runs);

/// `strategy,seed,cider_d,bleu4`
void write_compare_csv(std::span<const CompareRow> table, std::ostream& out);

}  // namespace seqgrad
