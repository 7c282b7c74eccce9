#pragma once

#include "probdr/core.hpp"

#include <string>
#include <vector>

namespace probdr::cli {

struct CsvTable {
  std::vector<std::string> header;  // empty when the file has none
  Matrix values;
};

/// Comma-separated numeric table. A first row with any non-numeric field is
/// taken as the header. Throws DataError naming the offending line.
CsvTable read_csv(const std::string& path);

/// Integer labels, one per row; a non-numeric first row is skipped.
std::vector<int> read_labels(const std::string& path);

void write_csv(const std::string& path, const Matrix& values, const std::vector<std::string>& header);

/// prefix1, prefix2, ...
std::vector<std::string> numbered_header(const std::string& prefix, Index count);

}  // namespace probdr::cli
