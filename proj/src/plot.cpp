#include "dat/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "dat/tensor.hpp"
#include "dat/util.hpp"

namespace dat::plot {

namespace {

constexpr double kW = 640, kH = 420, kLeft = 64, kRight = 150, kTop = 36, kBottom = 52;
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kW - kLeft - kRight); }
  double py(double y) const { return kH - kBottom - (y - y0) / (y1 - y0) * (kH - kTop - kBottom); }
};

void pad(double& lo, double& hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double m = 0.05 * (hi - lo);
  lo -= m;
  hi += m;
}

void axes_svg(std::ostringstream& os, const Frame& f, const Axes& a) {
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kW - kLeft - kRight << "\" height=\""
     << kH - kTop - kBottom << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0, yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    os << "<text x=\"" << f.px(xv) << "\" y=\"" << kH - kBottom + 16 << "\" font-size=\"11\" text-anchor=\"middle\">"
       << fmt(xv) << "</text>\n";
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << f.py(yv) + 4 << "\" font-size=\"11\" text-anchor=\"end\">" << fmt(yv)
       << "</text>\n";
  }
  os << "<text x=\"" << (kLeft + kW - kRight) / 2 << "\" y=\"" << kTop - 12
     << "\" font-size=\"14\" text-anchor=\"middle\">" << esc(a.title) << "</text>\n";
  os << "<text x=\"" << (kLeft + kW - kRight) / 2 << "\" y=\"" << kH - 12
     << "\" font-size=\"12\" text-anchor=\"middle\">" << esc(a.xlabel) << "</text>\n";
  os << "<text transform=\"translate(16," << (kTop + kH - kBottom) / 2
     << ") rotate(-90)\" font-size=\"12\" text-anchor=\"middle\">" << esc(a.ylabel) << "</text>\n";
}

std::string open_svg() {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return os.str();
}

}  // namespace

std::string chart(const Axes& axes, const std::vector<Series>& series) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw DomainError("series '" + s.name + "' has mismatched x and y");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = y0 = 0, x1 = y1 = 1;
  if (axes.equal_aspect) {
    const double cx = (x0 + x1) / 2, cy = (y0 + y1) / 2, r = std::max(x1 - x0, y1 - y0) / 2;
    x0 = cx - r, x1 = cx + r, y0 = cy - r, y1 = cy + r;
  }
  pad(x0, x1);
  pad(y0, y1);
  const Frame f{x0, x1, y0, y1};

  std::ostringstream os;
  os << open_svg();
  axes_svg(os, f, axes);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % std::size(kColors)];
    if (s.points) {
      for (std::size_t i = 0; i < s.x.size(); ++i)
        os << "<circle cx=\"" << f.px(s.x[i]) << "\" cy=\"" << f.py(s.y[i]) << "\" r=\"1.8\" fill=\"" << color
           << "\" fill-opacity=\"0.6\"/>\n";
    } else {
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) os << f.px(s.x[i]) << ',' << f.py(s.y[i]) << ' ';
      os << "\"/>\n";
    }
    const double ly = kTop + 14 + 18.0 * static_cast<double>(k);
    os << "<rect x=\"" << kW - kRight + 12 << "\" y=\"" << ly - 9 << "\" width=\"10\" height=\"10\" fill=\"" << color
       << "\"/>\n<text x=\"" << kW - kRight + 28 << "\" y=\"" << ly << "\" font-size=\"11\">" << esc(s.name)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string reliability(const std::vector<double>& bin_upper, const std::vector<double>& accuracy,
                        const std::vector<double>& confidence, const std::string& title) {
  const Frame f{0, 1, 0, 1};
  std::ostringstream os;
  os << open_svg();
  axes_svg(os, f, {title, "confidence", "accuracy"});
  os << "<line x1=\"" << f.px(0) << "\" y1=\"" << f.py(0) << "\" x2=\"" << f.px(1) << "\" y2=\"" << f.py(1)
     << "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";
  double lower = 0.0;
  for (std::size_t b = 0; b < bin_upper.size(); ++b) {
    const double w = f.px(bin_upper[b]) - f.px(lower);
    os << "<rect x=\"" << f.px(lower) << "\" y=\"" << f.py(accuracy[b]) << "\" width=\"" << w << "\" height=\""
       << f.py(0) - f.py(accuracy[b]) << "\" fill=\"" << kColors[0] << "\" fill-opacity=\"0.7\" stroke=\"#333\"/>\n";
    os << "<circle cx=\"" << f.px(lower) + w / 2 << "\" cy=\"" << f.py(confidence[b]) << "\" r=\"3\" fill=\""
       << kColors[1] << "\"/>\n";
    lower = bin_upper[b];
  }
  os << "<rect x=\"" << kW - kRight + 12 << "\" y=\"" << kTop + 5 << "\" width=\"10\" height=\"10\" fill=\"" << kColors[0]
     << "\"/>\n<text x=\"" << kW - kRight + 28 << "\" y=\"" << kTop + 14 << "\" font-size=\"11\">accuracy</text>\n";
  os << "<circle cx=\"" << kW - kRight + 17 << "\" cy=\"" << kTop + 28 << "\" r=\"3\" fill=\"" << kColors[1]
     << "\"/>\n<text x=\"" << kW - kRight + 28 << "\" y=\"" << kTop + 32 << "\" font-size=\"11\">confidence</text>\n";
  os << "</svg>\n";
  return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw DomainError("cannot write " + path.string());
  os << content;
}

}  // namespace dat::plot
