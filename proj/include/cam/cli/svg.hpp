// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "cam/core/error.hpp"

namespace cam::cli::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct Bar {
  std::string label;
  double value = 0.0;
  double error = 0.0;  // half-height of the whisker; 0 draws none
};

namespace detail {

inline constexpr int kWidth = 640;
inline constexpr int kHeight = 400;
inline constexpr int kLeft = 70;
inline constexpr int kRight = 150;
inline constexpr int kTop = 40;
inline constexpr int kBottom = 50;
inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

inline std::string escape(const std::string& s) {
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

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct Range {
  double lo = 0.0;
  double hi = 1.0;
  void include(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
};

inline std::string open(const std::string& title) {
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
     << "</text>\n";
  return os.str();
}

inline std::string axes(const Range& yr, const std::string& xlabel, const std::string& ylabel) {
  const int x0 = kLeft;
  const int x1 = kWidth - kRight;
  const int y0 = kHeight - kBottom;
  const int y1 = kTop;
  std::ostringstream os;
  os << "<g stroke=\"black\" fill=\"none\">\n"
     << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0 << "\"/>\n"
     << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1 << "\"/>\n"
     << "</g>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    const double y = y0 - (y0 - y1) * i / 4.0;
    os << "<text x=\"" << x0 - 6 << "\" y=\"" << px(y + 4) << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
  }
  os << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">" << escape(xlabel)
     << "</text>\n"
     << "<text x=\"16\" y=\"" << (y0 + y1) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << (y0 + y1) / 2 << ")\">" << escape(ylabel) << "</text>\n";
  return os.str();
}

inline void write(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open chart file '" + path + "'");
  out << body;
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace detail

/// Polyline chart of one or more series sharing the axes.
inline std::string line_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                              const std::vector<Series>& series) {
  using namespace detail;
  Range xr{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  Range yr{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& s : series) {
    for (double v : s.x) xr.include(v);
    for (double v : s.y) yr.include(v);
  }
  if (!std::isfinite(xr.lo)) xr = {0.0, 1.0};
  if (!std::isfinite(yr.lo)) yr = {0.0, 1.0};
  xr.pad();
  yr.pad();
  const double x0 = kLeft;
  const double x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom;
  const double y1 = kTop;
  std::string out = open(title) + axes(yr, xlabel, ylabel);
  for (int i = 0; i <= 4; ++i) {
    const double v = xr.lo + (xr.hi - xr.lo) * i / 4.0;
    out += "<text x=\"" + px(x0 + (x1 - x0) * i / 4.0) + "\" y=\"" + px(y0 + 16) + "\" text-anchor=\"middle\">" +
           num(v) + "</text>\n";
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    std::string pts;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      const double px_ = x0 + (s.x[i] - xr.lo) / (xr.hi - xr.lo) * (x1 - x0);
      const double py_ = y0 - (s.y[i] - yr.lo) / (yr.hi - yr.lo) * (y0 - y1);
      if (!pts.empty()) pts += ' ';
      pts += px(px_) + ',' + px(py_);
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + pts +
           "\"/>\n";
    const double ly = y1 + 16.0 * static_cast<double>(k);
    out += "<line x1=\"" + px(x1 + 12) + "\" y1=\"" + px(ly) + "\" x2=\"" + px(x1 + 30) + "\" y2=\"" + px(ly) +
           "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + px(x1 + 36) + "\" y=\"" + px(ly + 4) + "\">" + escape(s.label) + "</text>\n";
  }
  return out + "</svg>\n";
}

/// Vertical bars from zero (or the smallest negative value).
inline std::string bar_chart(const std::string& title, const std::string& ylabel, const std::vector<Bar>& bars) {
  using namespace detail;
  Range yr{0.0, 0.0};
  for (const auto& b : bars) {
    yr.include(b.value + b.error);
    yr.include(b.value - b.error);
  }
  yr.pad();
  const double x0 = kLeft;
  const double x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom;
  const double y1 = kTop;
  const auto ymap = [&](double v) { return y0 - (v - yr.lo) / (yr.hi - yr.lo) * (y0 - y1); };
  std::string out = open(title) + axes(yr, "", ylabel);
  const double slot = bars.empty() ? 1.0 : (x1 - x0) / static_cast<double>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const auto& b = bars[i];
    const double cx = x0 + slot * (static_cast<double>(i) + 0.5);
    const double top = std::isfinite(b.value) ? ymap(std::max(b.value, 0.0)) : ymap(0.0);
    const double bottom = std::isfinite(b.value) ? ymap(std::min(b.value, 0.0)) : ymap(0.0);
    out += "<rect x=\"" + px(cx - 0.35 * slot) + "\" y=\"" + px(top) + "\" width=\"" + px(0.7 * slot) +
           "\" height=\"" + px(bottom - top) + "\" fill=\"" + kPalette[i % std::size(kPalette)] + "\"/>\n";
    if (b.error > 0.0 && std::isfinite(b.value)) {
      out += "<line x1=\"" + px(cx) + "\" y1=\"" + px(ymap(b.value - b.error)) + "\" x2=\"" + px(cx) + "\" y2=\"" +
             px(ymap(b.value + b.error)) + "\" stroke=\"black\"/>\n";
    }
    out += "<text x=\"" + px(cx) + "\" y=\"" + px(y0 + 16) + "\" text-anchor=\"middle\">" + escape(b.label) +
           "</text>\n";
  }
  return out + "</svg>\n";
}

inline void write_line_chart(const std::string& path, const std::string& title, const std::string& xlabel,
                             const std::string& ylabel, const std::vector<Series>& series) {
  detail::write(path, line_chart(title, xlabel, ylabel, series));
}

inline void write_bar_chart(const std::string& path, const std::string& title, const std::string& ylabel,
                            const std::vector<Bar>& bars) {
  detail::write(path, bar_chart(title, ylabel, bars));
}

}  // namespace cam::cli::svg
