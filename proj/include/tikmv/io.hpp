#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace tikmv::io {

// Shortest representation that round-trips to the same double.
std::string format_double(double value);

std::vector<std::string> split_csv_line(std::string_view line);

double parse_double(std::string_view text);

// Writes through `writer` into a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::function<void(std::ostream&)>& writer);

struct Series {
  std::string label;
  std::string color;
  std::vector<double> x;
  std::vector<double> y;
};

// Log-log line plot (log10 on both axes) as a standalone SVG document.
// Non-positive points are skipped.
std::string loglog_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                       const std::string& y_label);

}  // namespace tikmv::io
