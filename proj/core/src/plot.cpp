#include "stgan/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "stgan/errors.hpp"

namespace stgan::plot {
namespace {

constexpr double kWidth = 720, kHeight = 420;
constexpr double kLeft = 70, kRight = 160, kTop = 40, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Axis {
  double lo, hi;
  double map(double v, double a, double b) const {
    return hi == lo ? (a + b) / 2 : a + (v - lo) / (hi - lo) * (b - a);
  }
};

Axis padded(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) return {0, 1};
  if (hi == lo) return {lo - 1, hi + 1};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

void header(std::ostringstream& svg, const std::string& title) {
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
      << escape(title) << "</text>\n";
}

void frame(std::ostringstream& svg, const Axis& y) {
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  svg << "<rect x=\"" << x0 << "\" y=\"" << y1 << "\" width=\"" << x1 - x0 << "\" height=\""
      << y0 - y1 << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = y.lo + (y.hi - y.lo) * i / 4.0;
    const double py = y.map(v, y0, y1);
    svg << "<line x1=\"" << x0 - 4 << "\" x2=\"" << x0 << "\" y1=\"" << py << "\" y2=\"" << py
        << "\" stroke=\"#333\"/>\n<text x=\"" << x0 - 6 << "\" y=\"" << py + 4
        << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
  }
}

void legend(std::ostringstream& svg, const std::vector<std::string>& labels) {
  const double x = kWidth - kRight + 14;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double y = kTop + 10 + 20.0 * double(i);
    svg << "<rect x=\"" << x << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"12\" fill=\""
        << kPalette[i % std::size(kPalette)] << "\"/>\n<text x=\"" << x + 18 << "\" y=\"" << y + 1
        << "\">" << escape(labels[i]) << "</text>\n";
  }
}

void save(const std::filesystem::path& path, std::ostringstream& svg) {
  svg << "</svg>\n";
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError(path, "cannot write plot");
  out << svg.str();
}

}  // namespace

void line_chart(const std::filesystem::path& path, const std::string& title,
                const std::string& x_label, const std::vector<Series>& series) {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ValidationError("line_chart: x/y length mismatch");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      xlo = std::min(xlo, s.x[i]);
      xhi = std::max(xhi, s.x[i]);
      ylo = std::min(ylo, s.y[i]);
      yhi = std::max(yhi, s.y[i]);
    }
  }
  const Axis xa = padded(xlo, xhi), ya = padded(ylo, yhi);
  std::ostringstream svg;
  header(svg, title);
  frame(svg, ya);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    labels.push_back(s.label);
    svg << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\""
        << kPalette[k % std::size(kPalette)] << "\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      svg << num(xa.map(s.x[i], x0, x1)) << ',' << num(ya.map(s.y[i], y0, y1)) << ' ';
    }
    svg << "\"/>\n";
  }
  svg << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n"
      << "<text x=\"" << x0 << "\" y=\"" << y0 + 16 << "\">" << num(xa.lo) << "</text>\n"
      << "<text x=\"" << x1 << "\" y=\"" << y0 + 16 << "\" text-anchor=\"end\">" << num(xa.hi)
      << "</text>\n";
  legend(svg, labels);
  save(path, svg);
}

void bar_chart(const std::filesystem::path& path, const std::string& title,
               const std::vector<std::string>& groups, const std::vector<std::string>& categories,
               const std::vector<std::vector<double>>& values) {
  if (values.size() != groups.size()) throw ValidationError("bar_chart: one row per group");
  double hi = 0;
  for (const auto& row : values) {
    if (row.size() != categories.size()) throw ValidationError("bar_chart: one value per category");
    for (double v : row) {
      if (std::isfinite(v)) hi = std::max(hi, v);
    }
  }
  const Axis ya{0, hi > 0 ? hi * 1.1 : 1};
  std::ostringstream svg;
  header(svg, title);
  frame(svg, ya);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  const double group_w = (x1 - x0) / double(std::max<std::size_t>(groups.size(), 1));
  const double bar_w = 0.8 * group_w / double(std::max<std::size_t>(categories.size(), 1));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double gx = x0 + group_w * double(g) + 0.1 * group_w;
    for (std::size_t c = 0; c < categories.size(); ++c) {
      const double v = std::isfinite(values[g][c]) ? values[g][c] : 0.0;
      const double top = ya.map(v, y0, y1);
      svg << "<rect x=\"" << num(gx + bar_w * double(c)) << "\" y=\"" << num(top) << "\" width=\""
          << num(bar_w) << "\" height=\"" << num(y0 - top) << "\" fill=\""
          << kPalette[c % std::size(kPalette)] << "\"/>\n";
    }
    svg << "<text x=\"" << num(gx + 0.4 * group_w) << "\" y=\"" << y0 + 16
        << "\" text-anchor=\"middle\">" << escape(groups[g]) << "</text>\n";
  }
  legend(svg, categories);
  save(path, svg);
}

}  // namespace stgan::plot
