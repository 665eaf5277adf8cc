#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sysid/system.hpp"

namespace sysid {

/// Minimal static SVG line/band plotter. No dependency, fixed 760x520
/// canvas, optional log10 axes.
class SvgPlot {
 public:
  SvgPlot(std::string title, std::string x_label, std::string y_label, bool log_x = false,
          bool log_y = false)
      : title_(std::move(title)),
        x_label_(std::move(x_label)),
        y_label_(std::move(y_label)),
        log_x_(log_x),
        log_y_(log_y) {}

  void add_line(const std::vector<double>& xs, const std::vector<double>& ys,
                const std::string& color, const std::string& label = "") {
    lines_.push_back({xs, ys, color, label});
    extend_range(xs, ys);
  }

  void add_band(const std::vector<double>& xs, const std::vector<double>& lo,
                const std::vector<double>& hi, const std::string& color) {
    bands_.push_back({xs, lo, hi, color});
    extend_range(xs, lo);
    extend_range(xs, hi);
  }

  void add_hline(double y, const std::string& color, const std::string& label = "") {
    hlines_.push_back({y, color, label});
  }

  std::string render() const {
    if (lines_.empty() && bands_.empty()) throw std::logic_error("SvgPlot: nothing to draw");
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
       << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
       << title_ << "</text>\n";

    for (const auto& b : bands_) {
      os << "<polygon fill=\"" << b.color << "\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < b.xs.size(); ++i)
        os << px(b.xs[i]) << ',' << py(b.hi[i]) << ' ';
      for (std::size_t i = b.xs.size(); i-- > 0;)
        os << px(b.xs[i]) << ',' << py(b.lo[i]) << ' ';
      os << "\"/>\n";
    }
    for (const auto& h : hlines_) {
      os << "<line x1=\"" << kMargin << "\" y1=\"" << py(h.y) << "\" x2=\"" << kW - kMargin
         << "\" y2=\"" << py(h.y) << "\" stroke=\"" << h.color
         << "\" stroke-dasharray=\"6,4\" stroke-width=\"1\"/>\n";
    }
    for (const auto& l : lines_) {
      os << "<polyline fill=\"none\" stroke=\"" << l.color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < l.xs.size(); ++i)
        os << px(l.xs[i]) << ',' << py(l.ys[i]) << ' ';
      os << "\"/>\n";
    }

    axes(os);
    legend(os);
    os << "</svg>\n";
    return os.str();
  }

  void write(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("SvgPlot: cannot open " + path);
    f << render();
  }

 private:
  struct Line {
    std::vector<double> xs, ys;
    std::string color, label;
  };
  struct Band {
    std::vector<double> xs, lo, hi;
    std::string color;
  };
  struct HLine {
    double y;
    std::string color, label;
  };

  static constexpr int kW = 760, kH = 520, kMargin = 64;

  double tx(double x) const { return log_x_ ? std::log10(x) : x; }
  double ty(double y) const { return log_y_ ? std::log10(y) : y; }

  std::string px(double x) const {
    const double lo = tx(xmin_), hi = tx(xmax_);
    const double f = hi > lo ? (tx(x) - lo) / (hi - lo) : 0.5;
    return fmt_double(kMargin + f * (kW - 2 * kMargin));
  }
  std::string py(double y) const {
    const double lo = ty(ymin_), hi = ty(ymax_);
    const double f = hi > lo ? (ty(y) - lo) / (hi - lo) : 0.5;
    return fmt_double(kH - kMargin - f * (kH - 2 * kMargin));
  }

  void extend_range(const std::vector<double>& xs, const std::vector<double>& ys) {
    for (double x : xs) {
      xmin_ = std::min(xmin_, x);
      xmax_ = std::max(xmax_, x);
    }
    for (double y : ys) {
      ymin_ = std::min(ymin_, y);
      ymax_ = std::max(ymax_, y);
    }
  }

  void axes(std::ostringstream& os) const {
    os << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kW - 2 * kMargin
       << "\" height=\"" << kH - 2 * kMargin
       << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
    for (int i = 0; i <= 4; ++i) {
      const double fx = xmin_ == xmax_ ? 0.5 : static_cast<double>(i) / 4.0;
      const double vx = untx(tx(xmin_) + fx * (tx(xmax_) - tx(xmin_)));
      const double gx = kMargin + fx * (kW - 2 * kMargin);
      os << "<text x=\"" << gx << "\" y=\"" << kH - kMargin + 18
         << "\" text-anchor=\"middle\" font-size=\"11\">" << tick(vx) << "</text>\n";
      const double fy = static_cast<double>(i) / 4.0;
      const double vy = unty(ty(ymin_) + fy * (ty(ymax_) - ty(ymin_)));
      const double gy = kH - kMargin - fy * (kH - 2 * kMargin);
      os << "<text x=\"" << kMargin - 8 << "\" y=\"" << gy + 4
         << "\" text-anchor=\"end\" font-size=\"11\">" << tick(vy) << "</text>\n";
    }
    os << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 16
       << "\" text-anchor=\"middle\" font-size=\"13\">" << x_label_ << "</text>\n";
    os << "<text x=\"18\" y=\"" << kH / 2 << "\" text-anchor=\"middle\" font-size=\"13\""
       << " transform=\"rotate(-90 18 " << kH / 2 << ")\">" << y_label_ << "</text>\n";
  }

  void legend(std::ostringstream& os) const {
    int row = 0;
    for (const auto& l : lines_) {
      if (l.label.empty()) continue;
      const int y = kMargin + 16 + 16 * row++;
      os << "<line x1=\"" << kW - kMargin - 150 << "\" y1=\"" << y << "\" x2=\""
         << kW - kMargin - 120 << "\" y2=\"" << y << "\" stroke=\"" << l.color
         << "\" stroke-width=\"2\"/>\n";
      os << "<text x=\"" << kW - kMargin - 112 << "\" y=\"" << y + 4 << "\" font-size=\"11\">"
         << l.label << "</text>\n";
    }
    for (const auto& h : hlines_) {
      if (h.label.empty()) continue;
      const int y = kMargin + 16 + 16 * row++;
      os << "<text x=\"" << kW - kMargin - 112 << "\" y=\"" << y + 4 << "\" font-size=\"11\">"
         << h.label << "</text>\n";
    }
  }

  double untx(double v) const { return log_x_ ? std::pow(10.0, v) : v; }
  double unty(double v) const { return log_y_ ? std::pow(10.0, v) : v; }

  static std::string tick(double v) {
    const double r = std::abs(v) >= 100.0 ? std::round(v) : std::round(v * 1000.0) / 1000.0;
    return fmt_double(r);
  }

  std::string title_, x_label_, y_label_;
  bool log_x_, log_y_;
  std::vector<Line> lines_;
  std::vector<Band> bands_;
  std::vector<HLine> hlines_;
  double xmin_ = std::numeric_limits<double>::infinity();
  double xmax_ = -std::numeric_limits<double>::infinity();
  double ymin_ = std::numeric_limits<double>::infinity();
  double ymax_ = -std::numeric_limits<double>::infinity();
};

}  // namespace sysid
