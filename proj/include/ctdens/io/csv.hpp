#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <Eigen/Dense>

#include "ctdens/common.hpp"

namespace ctdens::io {

struct Dataset {
  std::vector<std::string> names; // empty when the file has no header
  Eigen::MatrixXd values;
};

enum class CsvHeader { automatic, yes, no };

namespace detail {

inline std::vector<std::string> split_line(const std::string& line)
{
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ','))
    out.push_back(field);
  if (!line.empty() && line.back() == ',')
    out.push_back("");
  return out;
}

inline bool parse_double(const std::string& field, double& value)
{
  const char* begin = field.data();
  const char* end = begin + field.size();
  while (begin < end && (*begin == ' ' || *begin == '\t'))
    ++begin;
  while (end > begin && (*(end - 1) == ' ' || *(end - 1) == '\t' || *(end - 1) == '\r'))
    --end;
  if (begin == end)
    return false;
  const auto result = std::from_chars(begin, end, value);
  return result.ec == std::errc() && result.ptr == end;
}

} // namespace detail

//! Load a numeric CSV.  Header row is auto-detected unless forced;
//! ragged rows and non-finite or non-numeric fields are rejected with
//! their location.
inline Dataset load_csv(const std::string& path, CsvHeader header = CsvHeader::automatic)
{
  std::ifstream in(path);
  if (!in)
    throw data_error("load_csv: cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (!line.empty())
      lines.push_back(line);
  }
  if (lines.empty())
    throw data_error("load_csv: '" + path + "' is empty");

  Dataset out;
  std::size_t first_row = 0;
  const std::vector<std::string> head = detail::split_line(lines[0]);
  bool head_numeric = true;
  for (const auto& f : head) {
    double v;
    if (!detail::parse_double(f, v)) {
      head_numeric = false;
      break;
    }
  }
  const bool has_header = header == CsvHeader::yes || (header == CsvHeader::automatic && !head_numeric);
  if (has_header) {
    out.names = head;
    first_row = 1;
    if (lines.size() == 1)
      throw data_error("load_csv: '" + path + "' has a header but no data rows");
  } else if (!head_numeric) {
    throw data_error("load_csv: row 1 of '" + path + "' is not numeric");
  }

  const std::size_t n = lines.size() - first_row;
  const std::size_t d = head.size();
  out.values.resize(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    const auto fields = detail::split_line(lines[first_row + r]);
    if (fields.size() != d)
      throw data_error("load_csv: row " + std::to_string(first_row + r + 1) + " has "
                       + std::to_string(fields.size()) + " fields, expected " + std::to_string(d));
    for (std::size_t c = 0; c < d; ++c) {
      double v;
      if (!detail::parse_double(fields[c], v))
        throw data_error("load_csv: row " + std::to_string(first_row + r + 1) + ", column "
                         + std::to_string(c + 1) + ": not a number");
      if (!std::isfinite(v))
        throw data_error("load_csv: row " + std::to_string(first_row + r + 1) + ", column "
                         + std::to_string(c + 1) + ": non-finite value");
      out.values(static_cast<int>(r), static_cast<int>(c)) = v;
    }
  }
  return out;
}

//! Shortest round-trip decimal form of a double.
inline std::string format_double(double v)
{
  char buf[32];
  const auto result = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, result.ptr);
}

//! Write a file atomically: write to a sibling temp file, then rename.
inline void atomic_write(const std::string& path, const std::string& content)
{
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw data_error("atomic_write: cannot open '" + tmp + "'");
    out << content;
    if (!out)
      throw data_error("atomic_write: write to '" + tmp + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec)
    throw data_error("atomic_write: rename to '" + path + "' failed: " + ec.message());
}

//! Serialize a matrix as CSV with an optional header row.
inline std::string to_csv(const std::vector<std::string>& names, const Eigen::MatrixXd& values)
{
  std::string out;
  if (!names.empty()) {
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (j)
        out += ',';
      out += names[j];
    }
    out += '\n';
  }
  for (int i = 0; i < values.rows(); ++i) {
    for (int j = 0; j < values.cols(); ++j) {
      if (j)
        out += ',';
      out += format_double(values(i, j));
    }
    out += '\n';
  }
  return out;
}

} // namespace ctdens::io
