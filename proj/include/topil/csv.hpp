// csv.hpp - minimal comma-separated I/O used by the trace, dataset and report writers
#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace topil::csv {

/// Shortest text that parses back to the identical double.
std::string num(double v);

class Writer {
 public:
  Writer(const std::filesystem::path& path, const std::vector<std::string>& header);
  Writer& cell(std::string_view s);
  Writer& cell(double v);
  Writer& cell(long long v);
  Writer& cell(int v) { return cell(static_cast<long long>(v)); }
  void end_row();

 private:
  std::ofstream out_;
  std::size_t columns_;
  std::size_t in_row_ = 0;
};

class Table {
 public:
  static Table read(const std::filesystem::path& path);

  std::size_t rows() const { return rows_.size(); }
  std::size_t column(std::string_view name) const;  // throws when missing
  bool has_column(std::string_view name) const;
  const std::string& str(std::size_t row, std::size_t col) const { return rows_.at(row).at(col); }
  double num(std::size_t row, std::size_t col) const;
  const std::vector<std::string>& header() const { return header_; }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::vector<std::string> split(std::string_view line, char sep = ',');

}  // namespace topil::csv
