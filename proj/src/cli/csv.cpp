#include "probdr/cli/csv.hpp"

#include "probdr/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace probdr::cli {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

bool parse_number(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* first = t.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size();
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open input file '" + path + "'");
  return in;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  auto in = open_input(path);
  CsvTable table;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    std::vector<double> row(fields.size());
    bool numeric = true;
    for (std::size_t k = 0; k < fields.size() && numeric; ++k) numeric = parse_number(fields[k], row[k]);
    if (!numeric) {
      if (rows.empty() && table.header.empty()) {
        for (const auto& f : fields) table.header.push_back(trim(f));
        width = fields.size();
        continue;
      }
      throw DataError("malformed CSV row " + std::to_string(line_no) + " in '" + path + "': non-numeric field");
    }
    if (width == 0) width = row.size();
    if (row.size() != width) {
      throw DataError("malformed CSV row " + std::to_string(line_no) + " in '" + path + "': expected " +
                      std::to_string(width) + " fields, found " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("input file '" + path + "' contains no data rows");
  table.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j) table.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return table;
}

std::vector<int> read_labels(const std::string& path) {
  const CsvTable table = read_csv(path);
  if (table.values.cols() != 1) throw DataError("label file '" + path + "' must have exactly one column");
  std::vector<int> labels;
  for (Index i = 0; i < table.values.rows(); ++i) {
    const double v = table.values(i, 0);
    if (v != std::floor(v)) throw DataError("label file '" + path + "' holds a non-integer label");
    labels.push_back(static_cast<int>(v));
  }
  return labels;
}

void write_csv(const std::string& path, const Matrix& values, const std::vector<std::string>& header) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file '" + path + "' for writing");
  for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
  if (!header.empty()) out << '\n';
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) out << (j ? "," : "") << format_double(values(i, j));
    out << '\n';
  }
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

std::vector<std::string> numbered_header(const std::string& prefix, Index count) {
  std::vector<std::string> out;
  for (Index k = 1; k <= count; ++k) out.push_back(prefix + std::to_string(k));
  return out;
}

}  // namespace probdr::cli
