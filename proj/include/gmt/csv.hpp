// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace gmt {

/// Shortest round-trippable decimal form ("%.17g"), '.' decimal point.
std::string format_double(double value);

/// Comma-separated, LF-terminated, header first. Fields are never quoted;
/// callers only pass values without commas or newlines.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::initializer_list<std::string_view> header);

  CsvWriter& field(std::string_view text);
  CsvWriter& field(double value);
  CsvWriter& field(long long value);
  CsvWriter& field(unsigned long long value);
  CsvWriter& field(int value) { return field(static_cast<long long>(value)); }
  CsvWriter& field(std::size_t value) { return field(static_cast<unsigned long long>(value)); }
  void end_row();

 private:
  std::ofstream out_;
  std::size_t columns_;
  std::size_t in_row_ = 0;
};

/// Minimal reader for files written by CsvWriter.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  static CsvTable read(const std::filesystem::path& path);
  /// Throws if the column is missing.
  std::size_t column(std::string_view name) const;
};

}  // namespace gmt
