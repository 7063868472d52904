#include "topil/csv.hpp"

#include <charconv>
#include <stdexcept>

namespace topil::csv {

std::string num(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("csv: cannot format number");
  return std::string(buf, end);
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
  return out;
}

Writer::Writer(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path), columns_(header.size()) {
  if (!out_) throw std::runtime_error("csv: cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
  out_ << '\n';
}

Writer& Writer::cell(std::string_view s) {
  if (s.find(',') != std::string_view::npos) throw std::invalid_argument("csv: cell contains a comma");
  out_ << (in_row_++ ? "," : "") << s;
  return *this;
}

Writer& Writer::cell(double v) { return cell(std::string_view(num(v))); }

Writer& Writer::cell(long long v) { return cell(std::string_view(std::to_string(v))); }

void Writer::end_row() {
  if (in_row_ != columns_) throw std::logic_error("csv: row has wrong number of cells");
  out_ << '\n';
  in_row_ = 0;
}

Table Table::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open " + path.string());
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv: empty file " + path.string());
  t.header_ = split(line);
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto row = split(line);
    if (row.size() != t.header_.size())
      throw std::runtime_error("csv: ragged row in " + path.string());
    t.rows_.push_back(std::move(row));
  }
  return t;
}

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header_.size(); ++i)
    if (header_[i] == name) return i;
  throw std::runtime_error("csv: missing column '" + std::string(name) + "'");
}

bool Table::has_column(std::string_view name) const {
  for (const auto& h : header_)
    if (h == name) return true;
  return false;
}

double Table::num(std::size_t row, std::size_t col) const {
  const auto& s = str(row, col);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw std::runtime_error("csv: not a number: '" + s + "'");
  return v;
}

}  // namespace topil::csv
