#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "idprobe/error.hpp"
#include "idprobe/tensor_io.hpp"

namespace idprobe {

// Shortest round-trip representation; shared by CSV and SVG so both carry
// the same digits.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

enum class Axis { left, right };
enum class Mark { points, line };

struct Series {
  std::string name;
  std::vector<double> y;  // aligned with Figure::x; NaN = no value
  Mark mark = Mark::points;
  Axis axis = Axis::left;
};

/// One plot and its backing table. Every series shares the x column.
struct Figure {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::string y2_label;  // right axis, used when any series sits on it
  bool log_x = false;
  std::vector<double> x;
  std::vector<std::string> row_labels;  // optional, e.g. run ids
  std::vector<Series> series;
};

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Wide CSV: [label,] x, one column per series.
inline std::string figure_csv(const Figure& fig) {
  const bool labelled = !fig.row_labels.empty();
  std::string out;
  if (labelled) out += "label,";
  out += csv_escape(fig.x_label);
  for (const auto& s : fig.series) out += "," + csv_escape(s.name);
  out += "\n";
  for (std::size_t i = 0; i < fig.x.size(); ++i) {
    if (labelled) out += csv_escape(fig.row_labels[i]) + ",";
    out += format_number(fig.x[i]);
    for (const auto& s : fig.series) out += "," + format_number(s.y[i]);
    out += "\n";
  }
  return out;
}

namespace detail {

inline std::string xml_escape(const std::string& s) {
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

struct Scale {
  double lo = 0.0, hi = 1.0;
  double px_lo = 0.0, px_hi = 1.0;
  bool log = false;

  double operator()(double v) const {
    const double a = log ? std::log10(v) : v;
    const double l = log ? std::log10(lo) : lo;
    const double h = log ? std::log10(hi) : hi;
    return px_lo + (a - l) / (h - l) * (px_hi - px_lo);
  }
};

inline Scale make_scale(std::vector<double> values, double px_lo, double px_hi, bool log) {
  values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return std::isnan(v); }), values.end());
  Scale s;
  s.px_lo = px_lo;
  s.px_hi = px_hi;
  s.log = log && !values.empty() && *std::min_element(values.begin(), values.end()) > 0.0;
  if (values.empty()) return s;
  s.lo = *std::min_element(values.begin(), values.end());
  s.hi = *std::max_element(values.begin(), values.end());
  if (s.log) {
    if (s.lo == s.hi) { s.lo /= 2.0; s.hi *= 2.0; }
    return s;
  }
  if (s.lo == s.hi) { s.lo -= 0.5; s.hi += 0.5; }
  const double pad = 0.05 * (s.hi - s.lo);
  s.lo -= pad;
  s.hi += pad;
  return s;
}

inline std::vector<double> ticks(const Scale& s) {
  std::vector<double> out;
  if (s.log) {
    for (double e = std::floor(std::log10(s.lo)); e <= std::ceil(std::log10(s.hi)); e += 1.0) {
      const double v = std::pow(10.0, e);
      if (v >= s.lo && v <= s.hi) out.push_back(v);
    }
    if (out.empty()) out = {s.lo, s.hi};
    return out;
  }
  const double raw = (s.hi - s.lo) / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) { step = m * mag; break; }
  for (double v = std::ceil(s.lo / step) * step; v <= s.hi + 1e-12 * step; v += step)
    out.push_back(std::fabs(v) < 1e-12 * step ? 0.0 : v);
  return out;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline constexpr std::array<const char*, 6> palette = {"#1f77b4", "#2ca02c", "#d62728", "#ff7f0e", "#9467bd", "#7f7f7f"};

}  // namespace detail

/// Renders a scatter/line chart. Each data point is a circle carrying its
/// exact values in data-x / data-y attributes.
inline std::string figure_svg(const Figure& fig) {
  constexpr double width = 720, height = 440;
  constexpr double left = 80, right = 80, top = 50, bottom = 60;
  const bool twin = std::any_of(fig.series.begin(), fig.series.end(), [](const Series& s) { return s.axis == Axis::right; });

  std::vector<double> left_values, right_values;
  for (const auto& s : fig.series)
    (s.axis == Axis::right ? right_values : left_values).insert(
        (s.axis == Axis::right ? right_values : left_values).end(), s.y.begin(), s.y.end());
  const auto xs = detail::make_scale(fig.x, left, width - right, fig.log_x);
  const auto ys = detail::make_scale(left_values, height - bottom, top, false);
  const auto ys2 = detail::make_scale(right_values, height - bottom, top, false);
  using detail::tick_label;
  using detail::xml_escape;

  std::string out;
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"440\" viewBox=\"0 0 720 440\">\n";
  out += "<rect width=\"720\" height=\"440\" fill=\"white\"/>\n";
  out += "<text x=\"360\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" +
         xml_escape(fig.title) + "</text>\n";
  // Axes and ticks.
  out += "<g stroke=\"black\" fill=\"none\">\n";
  out += "<line x1=\"" + num(left) + "\" y1=\"" + num(height - bottom) + "\" x2=\"" + num(width - right) +
         "\" y2=\"" + num(height - bottom) + "\"/>\n";
  out += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) + "\" y2=\"" +
         num(height - bottom) + "\"/>\n";
  if (twin)
    out += "<line x1=\"" + num(width - right) + "\" y1=\"" + num(top) + "\" x2=\"" + num(width - right) +
           "\" y2=\"" + num(height - bottom) + "\"/>\n";
  out += "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (double t : detail::ticks(xs))
    out += "<text x=\"" + num(xs(t)) + "\" y=\"" + num(height - bottom + 16) + "\" text-anchor=\"middle\">" +
           tick_label(t) + "</text>\n";
  for (double t : detail::ticks(ys))
    out += "<text x=\"" + num(left - 6) + "\" y=\"" + num(ys(t) + 4) + "\" text-anchor=\"end\">" + tick_label(t) +
           "</text>\n";
  if (twin)
    for (double t : detail::ticks(ys2))
      out += "<text x=\"" + num(width - right + 6) + "\" y=\"" + num(ys2(t) + 4) + "\" text-anchor=\"start\">" +
             tick_label(t) + "</text>\n";
  out += "</g>\n<g font-family=\"sans-serif\" font-size=\"13\">\n";
  out += "<text class=\"x-label\" x=\"" + num((left + width - right) / 2) + "\" y=\"" + num(height - 18) +
         "\" text-anchor=\"middle\">" + xml_escape(fig.x_label) + (xs.log ? " (log scale)" : "") + "</text>\n";
  out += "<text class=\"y-label\" transform=\"translate(20," + num((top + height - bottom) / 2) +
         ") rotate(-90)\" text-anchor=\"middle\">" + xml_escape(fig.y_label) + "</text>\n";
  if (twin)
    out += "<text class=\"y2-label\" transform=\"translate(" + num(width - 20) + "," +
           num((top + height - bottom) / 2) + ") rotate(90)\" text-anchor=\"middle\">" + xml_escape(fig.y2_label) +
           "</text>\n";
  out += "</g>\n";

  for (std::size_t si = 0; si < fig.series.size(); ++si) {
    const auto& s = fig.series[si];
    const auto& scale = s.axis == Axis::right ? ys2 : ys;
    const char* color = detail::palette[si % detail::palette.size()];
    out += "<g class=\"series\" data-series=\"" + xml_escape(s.name) + "\" fill=\"" + color + "\" stroke=\"" +
           color + "\">\n";
    if (s.mark == Mark::line) {
      out += "<polyline fill=\"none\" stroke-width=\"1.5\" points=\"";
      bool first = true;
      for (std::size_t i = 0; i < fig.x.size(); ++i) {
        if (std::isnan(s.y[i])) continue;
        out += (first ? "" : " ") + num(xs(fig.x[i])) + "," + num(scale(s.y[i]));
        first = false;
      }
      out += "\"/>\n";
    }
    const double radius = s.mark == Mark::line ? 2.0 : 4.0;
    for (std::size_t i = 0; i < fig.x.size(); ++i) {
      if (std::isnan(s.y[i])) continue;
      out += "<circle cx=\"" + num(xs(fig.x[i])) + "\" cy=\"" + num(scale(s.y[i])) + "\" r=\"" + num(radius) +
             "\" data-x=\"" + format_number(fig.x[i]) + "\" data-y=\"" + format_number(s.y[i]) + "\"/>\n";
    }
    out += "</g>\n";
    out += "<text x=\"" + num(left + 10) + "\" y=\"" + num(top + 14 + 14 * static_cast<double>(si)) +
           "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" + color + "\">" + xml_escape(s.name) +
           (twin ? (s.axis == Axis::right ? " (right axis)" : " (left axis)") : "") + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

/// CSV tables and SVG figures for one output directory, plus summary.json.
struct ReportBundle {
  std::map<std::string, std::string> tables;   // file name -> CSV
  std::map<std::string, std::string> figures;  // file name -> SVG
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();

  // Adds `<stem>.svg` with its backing `<stem>.csv`.
  void add_figure(const std::string& stem, const Figure& fig) {
    figures[stem + ".svg"] = figure_svg(fig);
    tables[stem + ".csv"] = figure_csv(fig);
  }

  void write(const std::filesystem::path& dir) const {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw io_error("cannot create '" + dir.string() + "': " + ec.message());
    for (const auto& [name, body] : tables) detail::write_file(dir / name, body);
    for (const auto& [name, body] : figures) detail::write_file(dir / name, body);
    detail::write_file(dir / "summary.json", summary.dump(2) + "\n");
  }
};

}  // namespace idprobe
