#include "seqgrad/report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "seqgrad/text.hpp"

namespace seqgrad {

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};

std::string num(double v) { return format_fixed(v, 2); }

// Short tick label.
std::string tick(double v) {
  if (v == 0.0) return "0";
  const double a = std::abs(v);
  if (a >= 1e4 || a < 1e-2) {
    const int e = static_cast<int>(std::floor(std::log10(a)));
    const double m = v / std::pow(10.0, e);
    return (std::abs(m - 1.0) < 1e-9 ? std::string() : format_fixed(m, 1) + "x") + "1e" + std::to_string(e);
  }
  return format_double(std::round(v * 100.0) / 100.0);
}

}  // namespace

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_line_chart_svg(std::span<const LineSeries> series, const ChartOptions& opts, std::ostream& out) {
  const double left = 70, right = 150, top = 40, bottom = 50;
  const double pw = opts.width - left - right;
  const double ph = opts.height - top - bottom;

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0;
  double y0 = x0, y1 = -x0, min_pos = x0;
  for (const LineSeries& s : series) {
    for (auto [x, y] : s.points) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
      if (y > 0) min_pos = std::min(min_pos, y);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1, min_pos = 1;
  if (x1 == x0) x1 = x0 + 1;

  if (opts.log_y) {
    if (!std::isfinite(min_pos)) min_pos = 1.0;
    y0 = std::floor(std::log10(min_pos));
    y1 = std::ceil(std::log10(std::max(y1, min_pos)));
  } else {
    y0 = std::min(y0, 0.0);
  }
  if (y1 == y0) y1 = y0 + 1;
  auto fy = [&](double y) { return opts.log_y ? std::log10(std::max(y, min_pos)) : y; };
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + ph - (fy(y) - y0) / (y1 - y0) * ph; };
  auto py_raw = [&](double v) { return top + ph - (v - y0) / (y1 - y0) * ph; };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opts.width << "\" height=\"" << opts.height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << num(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << xml_escape(opts.title) << "</text>\n";
  out << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\""
      << num(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";

  // y ticks
  if (opts.log_y) {
    for (int e = static_cast<int>(y0); e <= static_cast<int>(y1); ++e) {
      const double yy = py_raw(e);
      out << "<line x1=\"" << num(left - 4) << "\" y1=\"" << num(yy) << "\" x2=\"" << num(left) << "\" y2=\""
          << num(yy) << "\" stroke=\"black\"/>\n";
      out << "<text x=\"" << num(left - 6) << "\" y=\"" << num(yy + 4) << "\" text-anchor=\"end\">1e" << e
          << "</text>\n";
    }
  } else {
    for (int i = 0; i <= 4; ++i) {
      const double v = y0 + (y1 - y0) * i / 4.0;
      const double yy = py_raw(v);
      out << "<line x1=\"" << num(left - 4) << "\" y1=\"" << num(yy) << "\" x2=\"" << num(left) << "\" y2=\""
          << num(yy) << "\" stroke=\"black\"/>\n";
      out << "<text x=\"" << num(left - 6) << "\" y=\"" << num(yy + 4) << "\" text-anchor=\"end\">" << tick(v)
          << "</text>\n";
    }
  }
  // x ticks
  const int nx = static_cast<int>(std::min(10.0, std::max(1.0, x1 - x0)));
  for (int i = 0; i <= nx; ++i) {
    const double v = x0 + (x1 - x0) * i / nx;
    const double xx = px(v);
    out << "<line x1=\"" << num(xx) << "\" y1=\"" << num(top + ph) << "\" x2=\"" << num(xx) << "\" y2=\""
        << num(top + ph + 4) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << num(xx) << "\" y=\"" << num(top + ph + 18) << "\" text-anchor=\"middle\">" << tick(v)
        << "</text>\n";
  }
  out << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(opts.height - 10.0)
      << "\" text-anchor=\"middle\">" << xml_escape(opts.x_label) << "</text>\n";
  out << "<text x=\"16\" y=\"" << num(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << num(top + ph / 2) << ")\">" << xml_escape(opts.y_label) << (opts.log_y ? " (log scale)" : "")
      << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const LineSeries& s = series[i];
    const char* color = kPalette[i % std::size(kPalette)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t j = 0; j < s.points.size(); ++j) {
      out << (j ? " " : "") << num(px(s.points[j].first)) << ',' << num(py(s.points[j].second));
    }
    out << "\"/>\n";
    for (auto [x, y] : s.points) {
      out << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y)) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    }
    const double ly = top + 10 + 18.0 * static_cast<double>(i);
    const double lx = left + pw + 12;
    out << "<line x1=\"" << num(lx) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(lx + 20) << "\" y2=\""
        << num(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << num(lx + 26) << "\" y=\"" << num(ly + 4) << "\">" << xml_escape(s.name)
        << "</text>\n";
  }
  out << "</svg>\n";
}

std::vector<CompareRow> compare_table(std::span<const CompareRow> runs) {
  if (runs.empty()) throw std::invalid_argument("compare: no runs");
  std::vector<std::string> order;
  for (const CompareRow& r : runs) {
    if (std::find(order.begin(), order.end(), r.strategy) == order.end()) order.push_back(r.strategy);
  }
  std::vector<CompareRow> table;
  std::vector<CompareRow> means;
  for (const std::string& name : order) {
    CompareRow mean{name, "mean", 0.0, 0.0};
    std::size_t n = 0;
    for (const CompareRow& r : runs) {
      if (r.strategy != name) continue;
      table.push_back(r);
      mean.cider_d += r.cider_d;
      mean.bleu4 += r.bleu4;
      ++n;
    }
    mean.cider_d /= static_cast<double>(n);
    mean.bleu4 /= static_cast<double>(n);
    means.push_back(mean);
  }
  table.insert(table.end(), means.begin(), means.end());
  return table;
}

void write_compare_csv(std::span<const CompareRow> table, std::ostream& out) {
  out << "strategy,seed,cider_d,bleu4\n";
  for (const CompareRow& r : table) {
    out << r.strategy << ',' << r.seed << ',' << format_double(r.cider_d) << ',' << format_double(r.bleu4)
        << '\n';
  }
}

}  // namespace seqgrad
