// SPDX-License-Identifier: Apache-2.0
#include "gmt/csv.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace gmt {

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, std::initializer_list<std::string_view> header)
    : out_(path, std::ios::binary), columns_(header.size()) {
  if (!out_) throw std::runtime_error("csv: cannot open " + path.string());
  for (std::string_view h : header) field(h);
  end_row();
}

CsvWriter& CsvWriter::field(std::string_view text) {
  if (text.find_first_of(",\n\r\"") != std::string_view::npos)
    throw std::invalid_argument("csv: field needs quoting: " + std::string(text));
  if (in_row_++ > 0) out_ << ',';
  out_ << text;
  return *this;
}

CsvWriter& CsvWriter::field(double value) { return field(format_double(value)); }
CsvWriter& CsvWriter::field(long long value) { return field(std::to_string(value)); }
CsvWriter& CsvWriter::field(unsigned long long value) { return field(std::to_string(value)); }

void CsvWriter::end_row() {
  if (in_row_ != columns_)
    throw std::logic_error("csv: row has " + std::to_string(in_row_) + " fields, expected " +
                           std::to_string(columns_));
  out_ << '\n';
  out_.flush();
  in_row_ = 0;
}

namespace {
std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}
}  // namespace

CsvTable CsvTable::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (std::getline(in, line)) t.header = split_line(line);
  while (std::getline(in, line))
    if (!line.empty()) t.rows.push_back(split_line(line));
  return t;
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw std::out_of_range("csv: no column '" + std::string(name) + "'");
}

}  // namespace gmt
