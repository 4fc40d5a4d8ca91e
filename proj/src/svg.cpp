#include "chstab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace chstab {

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};

std::string escape(const std::string& s) {
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

std::string f3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// Roughly five "nice" ticks covering [lo, hi].
std::vector<double> linear_ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) t.push_back(v);
  return t;
}

}  // namespace

std::string line_plot_svg(const std::vector<PlotSeries>& series, const PlotOptions& opts) {
  const double left = 80, right = 20, top = 40, bottom = 55;
  const double pw = opts.width - left - right;
  const double ph = opts.height - top - bottom;

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("series '" + s.label + "' has mismatched lengths");
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
      if (opts.log_y && !(s.y[k] > 0.0)) continue;
      const double y = opts.log_y ? std::log10(s.y[k]) : s.y[k];
      xmin = std::min(xmin, s.x[k]);
      xmax = std::max(xmax, s.x[k]);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (!std::isfinite(xmin)) {
    xmin = 0.0;
    xmax = 1.0;
    ymin = 0.0;
    ymax = 1.0;
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (opts.log_y) {
    ymin = std::floor(ymin);
    ymax = std::ceil(ymax);
  }
  if (ymax == ymin) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opts.width << "\" height=\"" << opts.height
     << "\" viewBox=\"0 0 " << opts.width << ' ' << opts.height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!opts.title.empty())
    os << "<text x=\"" << f3(left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
       << escape(opts.title) << "</text>\n";
  os << "<rect x=\"" << f3(left) << "\" y=\"" << f3(top) << "\" width=\"" << f3(pw) << "\" height=\"" << f3(ph)
     << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (double xt : linear_ticks(xmin, xmax)) {
    os << "<line x1=\"" << f3(px(xt)) << "\" y1=\"" << f3(top + ph) << "\" x2=\"" << f3(px(xt)) << "\" y2=\""
       << f3(top + ph + 5) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << f3(px(xt)) << "\" y=\"" << f3(top + ph + 20) << "\" text-anchor=\"middle\" font-size=\"12\">"
       << tick_label(xt) << "</text>\n";
  }
  std::vector<double> yticks;
  if (opts.log_y) {
    const int stride = std::max(1, static_cast<int>(std::ceil((ymax - ymin) / 8.0)));
    for (double e = ymin; e <= ymax + 1e-9; e += stride) yticks.push_back(e);
  } else {
    yticks = linear_ticks(ymin, ymax);
  }
  for (double yt : yticks) {
    os << "<line x1=\"" << f3(left - 5) << "\" y1=\"" << f3(py(yt)) << "\" x2=\"" << f3(left + pw) << "\" y2=\""
       << f3(py(yt)) << "\" stroke=\"#dddddd\"/>\n";
    const std::string label = opts.log_y ? "1e" + tick_label(yt) : tick_label(yt);
    os << "<text x=\"" << f3(left - 8) << "\" y=\"" << f3(py(yt) + 4) << "\" text-anchor=\"end\" font-size=\"12\">"
       << label << "</text>\n";
  }
  os << "<text x=\"" << f3(left + pw / 2) << "\" y=\"" << f3(opts.height - 12.0)
     << "\" text-anchor=\"middle\" font-size=\"13\">" << escape(opts.xlabel) << "</text>\n";
  if (!opts.ylabel.empty())
    os << "<text transform=\"translate(18," << f3(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"13\">"
       << escape(opts.ylabel) << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const std::string color = s.color.empty() ? kPalette[i % std::size(kPalette)] : s.color;
    std::ostringstream path;
    bool pen_down = false;
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      const bool ok = std::isfinite(s.x[k]) && std::isfinite(s.y[k]) && (!opts.log_y || s.y[k] > 0.0);
      if (!ok) {
        pen_down = false;
        continue;
      }
      const double y = opts.log_y ? std::log10(s.y[k]) : s.y[k];
      path << (pen_down ? " L" : " M") << f3(px(s.x[k])) << ',' << f3(py(y));
      pen_down = true;
    }
    os << "<path d=\"" << path.str() << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
    const double ly = top + 16 + 18.0 * static_cast<double>(i);
    os << "<line x1=\"" << f3(left + pw - 150) << "\" y1=\"" << f3(ly - 4) << "\" x2=\"" << f3(left + pw - 125)
       << "\" y2=\"" << f3(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << f3(left + pw - 120) << "\" y=\"" << f3(ly) << "\" font-size=\"12\">" << escape(s.label)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string layout_svg(const ActuatorLayout& layout, const GridSpec& spec, int pixels) {
  const double margin = 20;
  const double lx = spec.lengths[0];
  const double ly = layout.dim == 2 ? spec.lengths[1] : 0.1 * lx;
  const double scale = pixels / std::max(lx, ly);
  const double w = lx * scale + 2 * margin;
  const double h = ly * scale + 2 * margin;
  auto px = [&](double x) { return margin + x * scale; };
  auto py = [&](double y) { return margin + (ly - y) * scale; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f3(w) << "\" height=\"" << f3(h)
     << "\" viewBox=\"0 0 " << f3(w) << ' ' << f3(h) << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<rect x=\"" << f3(px(0)) << "\" y=\"" << f3(py(ly)) << "\" width=\"" << f3(lx * scale) << "\" height=\""
     << f3(ly * scale) << "\" fill=\"none\" stroke=\"black\"/>\n";
  auto emit = [&](const std::vector<Box>& boxes, const char* color, const char* cls) {
    for (const auto& b : boxes) {
      const double y0 = layout.dim == 2 ? b.lo[1] : 0.0;
      const double y1 = layout.dim == 2 ? b.hi[1] : ly;
      os << "<rect class=\"" << cls << "\" x=\"" << f3(px(b.lo[0])) << "\" y=\"" << f3(py(y1)) << "\" width=\""
         << f3((b.hi[0] - b.lo[0]) * scale) << "\" height=\"" << f3((y1 - y0) * scale) << "\" fill=\"" << color
         << "\" stroke=\"none\"/>\n";
    }
  };
  emit(layout.order, "red", "order");
  emit(layout.heat, "green", "heat");
  os << "</svg>\n";
  return os.str();
}

}  // namespace chstab
