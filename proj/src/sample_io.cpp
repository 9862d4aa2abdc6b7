#include "hmmix/sample_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <string_view>
#include <vector>

#include "hmmix/errors.hpp"

namespace hmmix {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

double parse_cell(std::string_view cell, std::size_t line, std::string_view column) {
  double v = 0.0;
  const char* end = cell.data() + cell.size();
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc() || ptr != end || cell.empty())
    throw ParseError("line " + std::to_string(line) + ": column '" + std::string(column) +
                         "' is not numeric: '" + std::string(cell) + "'",
                     line);
  if (!std::isfinite(v))
    throw ParseError("line " + std::to_string(line) + ": column '" + std::string(column) +
                         "' is not finite",
                     line);
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

Sample load_sample(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());

  std::string line;
  std::size_t lineno = 0;
  do {
    if (!std::getline(in, line)) throw ParseError("empty file: " + path.string(), 1);
    ++lineno;
  } while (trim(line).empty());

  std::optional<std::size_t> iy, iw, iz, is;
  const auto header = split(line);
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "y") iy = c;
    else if (header[c] == "w") iw = c;
    else if (header[c] == "z") iz = c;
    else if (header[c] == "s") is = c;
    else throw ParseError("line " + std::to_string(lineno) + ": unknown column '" + std::string(header[c]) + "'", lineno);
  }
  if (!iy || !iw) throw ParseError("line " + std::to_string(lineno) + ": header must contain columns y and w", lineno);

  Sample out;
  if (is) out.s.emplace();
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw ParseError("line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                           " cells, found " + std::to_string(cells.size()),
                       lineno);
    out.y.push_back(parse_cell(cells[*iy], lineno, "y"));
    out.w.push_back(parse_cell(cells[*iw], lineno, "w"));
    if (iz) out.z.push_back(parse_cell(cells[*iz], lineno, "z"));
    if (is) {
      const double label = parse_cell(cells[*is], lineno, "s");
      if (label < 1.0 || label != std::floor(label))
        throw ParseError("line " + std::to_string(lineno) + ": regime label must be a positive integer", lineno);
      out.s->push_back(static_cast<Regime>(label) - 1);
    }
  }
  if (out.y.empty()) throw ParseError("no observations in " + path.string(), lineno);
  out.meta = "file:" + path.string();
  return out;
}

void save_sample(const Sample& sample, const std::filesystem::path& path) {
  require_valid(sample.violations());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "y,w";
  if (sample.has_z()) out << ",z";
  if (sample.s) out << ",s";
  out << '\n';
  for (std::size_t t = 0; t < sample.size(); ++t) {
    out << format_double(sample.y[t]) << ',' << format_double(sample.w[t]);
    if (sample.has_z()) out << ',' << format_double(sample.z[t]);
    if (sample.s) out << ',' << ((*sample.s)[t] + 1);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace hmmix
