#include "tikmv/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "tikmv/errors.hpp"

namespace tikmv::io {

std::string format_double(double value) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf.data(), end);
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    auto field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
    while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
    fields.emplace_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

double parse_double(std::string_view text) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw InvalidInput("cannot parse number '" + std::string(text) + "'");
  }
  return value;
}

void write_file_atomic(const std::filesystem::path& path, const std::function<void(std::ostream&)>& writer) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    writer(out);
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

std::string fixed(double v, int digits = 2) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
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

}  // namespace

std::string loglog_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                       const std::string& y_label) {
  constexpr double width = 640, height = 440;
  constexpr double left = 80, right = 160, top = 40, bottom = 60;
  const double plot_w = width - left - right, plot_h = height - top - bottom;

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!(s.x[i] > 0) || !(s.y[i] > 0)) continue;
      xmin = std::min(xmin, std::log10(s.x[i]));
      xmax = std::max(xmax, std::log10(s.x[i]));
      ymin = std::min(ymin, std::log10(s.y[i]));
      ymax = std::max(ymax, std::log10(s.y[i]));
    }
  }
  if (!std::isfinite(xmin)) xmin = -1, xmax = 0, ymin = -1, ymax = 0;
  xmin = std::floor(xmin), xmax = std::ceil(xmax);
  ymin = std::floor(ymin), ymax = std::ceil(ymax);
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;

  auto px = [&](double lx) { return left + (lx - xmin) / (xmax - xmin) * plot_w; };
  auto py = [&](double ly) { return top + (ymax - ly) / (ymax - ymin) * plot_h; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"15\">" << escape(title) << "</text>\n";
  svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\"" << plot_h
      << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (double e = xmin; e <= xmax + 1e-9; e += 1) {
    svg << "<line x1=\"" << fixed(px(e)) << "\" y1=\"" << top << "\" x2=\"" << fixed(px(e)) << "\" y2=\""
        << top + plot_h << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << fixed(px(e)) << "\" y=\"" << top + plot_h + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">1e" << static_cast<int>(e)
        << "</text>\n";
  }
  for (double e = ymin; e <= ymax + 1e-9; e += 1) {
    svg << "<line x1=\"" << left << "\" y1=\"" << fixed(py(e)) << "\" x2=\"" << left + plot_w << "\" y2=\""
        << fixed(py(e)) << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << left - 8 << "\" y=\"" << fixed(py(e) + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">1e" << static_cast<int>(e)
        << "</text>\n";
  }
  svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 16
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << escape(x_label) << "</text>\n";
  svg << "<text transform=\"translate(20," << top + plot_h / 2
      << ") rotate(-90)\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << escape(y_label)
      << "</text>\n";

  double legend_y = top + 10;
  for (const auto& s : series) {
    std::string points;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!(s.x[i] > 0) || !(s.y[i] > 0)) continue;
      const double x = px(std::log10(s.x[i])), y = py(std::log10(s.y[i]));
      points += fixed(x) + "," + fixed(y) + " ";
      svg << "<circle cx=\"" << fixed(x) << "\" cy=\"" << fixed(y) << "\" r=\"3.5\" fill=\"" << s.color << "\"/>\n";
    }
    svg << "<polyline points=\"" << points << "\" fill=\"none\" stroke=\"" << s.color
        << "\" stroke-width=\"2\"/>\n";
    svg << "<line x1=\"" << left + plot_w + 12 << "\" y1=\"" << legend_y << "\" x2=\"" << left + plot_w + 36
        << "\" y2=\"" << legend_y << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << left + plot_w + 42 << "\" y=\"" << legend_y + 4
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << escape(s.label) << "</text>\n";
    legend_y += 20;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace tikmv::io
