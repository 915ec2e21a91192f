#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace weldcam::io {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};

/// Plain comma-separated values: no quoting, header on the first line.
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

/// Shortest text that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& text);

}  // namespace weldcam::io
