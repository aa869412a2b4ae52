#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace nsod::svg {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 420;
constexpr int kLeft = 70, kRight = 30, kTop = 50, kBottom = 60;

const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                         "#9467bd", "#8c564b"};

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

struct Frame {
  double y_min, y_max;
  double px(double frac) const { return kLeft + frac * (kWidth - kLeft - kRight); }
  double py(double v) const {
    const double f = (v - y_min) / (y_max - y_min);
    return kHeight - kBottom - f * (kHeight - kTop - kBottom);
  }
};

Frame make_frame(const std::vector<Series>& series) {
  double lo = 0.0, hi = 1e-9;
  for (const auto& s : series) {
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  hi *= 1.1;
  if (hi <= lo) hi = lo + 1.0;
  return Frame{lo, hi};
}

void chart_header(std::ostringstream& out, const std::string& title,
                  const std::string& y_label, const Frame& frame) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"26\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n"
      << "<text x=\"16\" y=\"" << kHeight / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\" transform=\"rotate(-90 16 " << kHeight / 2 << ")\">"
      << y_label << "</text>\n";
  // Axes and horizontal gridlines.
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
      << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom
      << "\" x2=\"" << kWidth - kRight << "\" y2=\"" << kHeight - kBottom
      << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = frame.y_min + (frame.y_max - frame.y_min) * t / 4.0;
    const double y = frame.py(v);
    out << "<line x1=\"" << kLeft << "\" y1=\"" << y << "\" x2=\""
        << kWidth - kRight << "\" y2=\"" << y
        << "\" stroke=\"#dddddd\"/>\n"
        << "<text x=\"" << kLeft - 8 << "\" y=\"" << y + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">" << fmt(v) << "</text>\n";
  }
}

void legend(std::ostringstream& out, const std::vector<Series>& series) {
  double x = kLeft;
  for (std::size_t s = 0; s < series.size(); ++s) {
    out << "<rect x=\"" << x << "\" y=\"" << kHeight - 24
        << "\" width=\"12\" height=\"12\" fill=\""
        << kColors[s % std::size(kColors)] << "\"/>\n"
        << "<text x=\"" << x + 16 << "\" y=\"" << kHeight - 13
        << "\" font-family=\"sans-serif\" font-size=\"12\">"
        << series[s].label << "</text>\n";
    x += 24 + 8.0 * series[s].label.size();
  }
}

}  // namespace

std::string line_chart(const std::string& title,
                       const std::vector<std::string>& categories,
                       const std::vector<Series>& series,
                       const std::string& y_label) {
  const Frame frame = make_frame(series);
  std::ostringstream out;
  chart_header(out, title, y_label, frame);
  const std::size_t n = categories.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = frame.px(n == 1 ? 0.5 : static_cast<double>(i) / (n - 1));
    out << "<text x=\"" << x << "\" y=\"" << kHeight - kBottom + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">" << categories[i] << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % std::size(kColors)];
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < series[s].values.size() && i < n; ++i) {
      const double x =
          frame.px(n == 1 ? 0.5 : static_cast<double>(i) / (n - 1));
      out << x << "," << frame.py(series[s].values[i]) << " ";
    }
    out << "\"/>\n";
    for (std::size_t i = 0; i < series[s].values.size() && i < n; ++i) {
      const double x =
          frame.px(n == 1 ? 0.5 : static_cast<double>(i) / (n - 1));
      out << "<circle cx=\"" << x << "\" cy=\"" << frame.py(series[s].values[i])
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
  }
  legend(out, series);
  out << "</svg>\n";
  return out.str();
}

std::string bar_chart(const std::string& title,
                      const std::vector<std::string>& categories,
                      const std::vector<Series>& series,
                      const std::string& y_label) {
  const Frame frame = make_frame(series);
  std::ostringstream out;
  chart_header(out, title, y_label, frame);
  const std::size_t n = categories.size();
  const std::size_t ns = std::max<std::size_t>(1, series.size());
  const double slot = 1.0 / std::max<std::size_t>(1, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = frame.px(i * slot);
    const double x1 = frame.px((i + 1) * slot);
    out << "<text x=\"" << 0.5 * (x0 + x1) << "\" y=\""
        << kHeight - kBottom + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">" << categories[i] << "</text>\n";
    const double group_w = (x1 - x0) * 0.7;
    const double bar_w = group_w / ns;
    for (std::size_t s = 0; s < series.size(); ++s) {
      if (i >= series[s].values.size()) continue;
      const double v = series[s].values[i];
      const double bx = 0.5 * (x0 + x1) - group_w / 2 + s * bar_w;
      const double by = frame.py(v);
      out << "<rect x=\"" << bx << "\" y=\"" << by << "\" width=\""
          << bar_w * 0.9 << "\" height=\"" << frame.py(frame.y_min) - by
          << "\" fill=\"" << kColors[s % std::size(kColors)] << "\"/>\n";
    }
  }
  legend(out, series);
  out << "</svg>\n";
  return out.str();
}

}  // namespace nsod::svg
