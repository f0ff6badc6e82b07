#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "fklab/csv.hpp"
#include "fklab/errors.hpp"

namespace fklab {

// Hand-emitted SVG line plots: axes, a handful of ticks, polylines, dashed
// reference lines. No timestamps or generator tags, so reruns diff clean.
class LinePlot {
 public:
  LinePlot(std::string title, std::string xlabel, std::string ylabel)
      : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)) {}

  void log_x(bool on) { logx_ = on; }
  void add_series(std::vector<double> x, std::vector<double> y, const std::string& color,
                  const std::string& label) {
    if (x.size() != y.size() || x.empty()) throw input_error("series needs matching nonempty x/y");
    series_.push_back({std::move(x), std::move(y), color, label, false});
  }
  // scatter: same bookkeeping, rendered as dots
  void add_points(std::vector<double> x, std::vector<double> y, const std::string& color,
                  const std::string& label) {
    if (x.size() != y.size() || x.empty()) throw input_error("series needs matching nonempty x/y");
    series_.push_back({std::move(x), std::move(y), color, label, true});
  }
  void add_vline(double x, const std::string& color, const std::string& label) {
    vlines_.push_back({x, color, label});
  }
  void add_hline(double y, const std::string& color, const std::string& label) {
    hlines_.push_back({y, color, label});
  }

  void render(std::ostream& os) const {
    if (series_.empty()) throw input_error("plot has no series");
    double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
    bool first = true;
    for (const auto& s : series_) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        const double xv = tx(s.x[i]);
        if (!std::isfinite(xv) || !std::isfinite(s.y[i])) continue;
        if (first) { xmin = xmax = xv; ymin = ymax = s.y[i]; first = false; continue; }
        xmin = std::min(xmin, xv); xmax = std::max(xmax, xv);
        ymin = std::min(ymin, s.y[i]); ymax = std::max(ymax, s.y[i]);
      }
    }
    if (first) throw numeric_error("plot has no finite points");
    for (const auto& l : hlines_) { ymin = std::min(ymin, l.at); ymax = std::max(ymax, l.at); }
    for (const auto& l : vlines_) { xmin = std::min(xmin, tx(l.at)); xmax = std::max(xmax, tx(l.at)); }
    if (xmax == xmin) { xmax += 1; xmin -= 1; }
    if (ymax == ymin) { ymax += 1; ymin -= 1; }
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad; ymax += ypad;

    const int w = 720, h = 440, ml = 64, mr = 16, mt = 36, mb = 48;
    auto px = [&](double x) { return ml + (tx(x) - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
       << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
    os << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"14\">" << title_ << "</text>\n";

    // axes
    os << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
       << h - mb << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
       << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
      const double fy = ymin + (ymax - ymin) * i / 4.0;
      os << "<line x1=\"" << ml - 4 << "\" y1=\"" << py(fy) << "\" x2=\"" << ml << "\" y2=\""
         << py(fy) << "\" stroke=\"black\"/>\n";
      os << "<text x=\"" << ml - 8 << "\" y=\"" << py(fy) + 4
         << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << format_num(fy)
         << "</text>\n";
      const double gx = xmin + (xmax - xmin) * i / 4.0;
      const double fx = logx_ ? std::exp(gx) : gx;
      const double xpix = ml + (gx - xmin) / (xmax - xmin) * (w - ml - mr);
      os << "<line x1=\"" << xpix << "\" y1=\"" << h - mb << "\" x2=\"" << xpix << "\" y2=\""
         << h - mb + 4 << "\" stroke=\"black\"/>\n";
      os << "<text x=\"" << xpix << "\" y=\"" << h - mb + 18
         << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
         << format_num(fx) << "</text>\n";
    }
    os << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 10
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << xlabel_
       << "</text>\n";
    os << "<text x=\"14\" y=\"" << (mt + h - mb) / 2
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 "
       << (mt + h - mb) / 2 << ")\">" << ylabel_ << "</text>\n";

    for (const auto& l : hlines_) {
      os << "<line x1=\"" << ml << "\" y1=\"" << py(l.at) << "\" x2=\"" << w - mr << "\" y2=\""
         << py(l.at) << "\" stroke=\"" << l.color << "\" stroke-dasharray=\"6 4\"/>\n";
      if (!l.label.empty())
        os << "<text x=\"" << w - mr - 4 << "\" y=\"" << py(l.at) - 4
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << l.color
           << "\">" << l.label << "</text>\n";
    }
    for (const auto& l : vlines_) {
      os << "<line x1=\"" << px(l.at) << "\" y1=\"" << mt << "\" x2=\"" << px(l.at) << "\" y2=\""
         << h - mb << "\" stroke=\"" << l.color << "\" stroke-dasharray=\"6 4\"/>\n";
      if (!l.label.empty())
        os << "<text x=\"" << px(l.at) + 4 << "\" y=\"" << mt + 12
           << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << l.color << "\">" << l.label
           << "</text>\n";
    }

    int li = 0;
    for (const auto& s : series_) {
      if (s.points) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
          if (!std::isfinite(tx(s.x[i])) || !std::isfinite(s.y[i])) continue;
          os << "<circle cx=\"" << format_num(px(s.x[i])) << "\" cy=\"" << format_num(py(s.y[i]))
             << "\" r=\"2.5\" fill=\"" << s.color << "\"/>\n";
        }
      } else {
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
          if (!std::isfinite(tx(s.x[i])) || !std::isfinite(s.y[i])) continue;
          os << format_num(px(s.x[i])) << ',' << format_num(py(s.y[i])) << ' ';
        }
        os << "\"/>\n";
      }
      if (!s.label.empty()) {
        const int ly = mt + 16 + 16 * li++;
        os << "<line x1=\"" << w - mr - 120 << "\" y1=\"" << ly - 4 << "\" x2=\"" << w - mr - 96
           << "\" y2=\"" << ly - 4 << "\" stroke=\"" << s.color << "\" stroke-width=\"1.5\"/>\n";
        os << "<text x=\"" << w - mr - 90 << "\" y=\"" << ly
           << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label << "</text>\n";
      }
    }
    os << "</svg>\n";
  }

 private:
  struct Series {
    std::vector<double> x, y;
    std::string color, label;
    bool points = false;
  };
  struct RefLine {
    double at;
    std::string color, label;
  };
  double tx(double x) const { return logx_ ? std::log(x) : x; }

  std::string title_, xlabel_, ylabel_;
  bool logx_ = false;
  std::vector<Series> series_;
  std::vector<RefLine> vlines_, hlines_;
};

}  // namespace fklab
