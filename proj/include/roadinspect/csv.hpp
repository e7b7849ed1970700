#pragma once

// Minimal comma-separated tables: no quoting, first row is a header.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "roadinspect/error.hpp"

namespace roadinspect::csv {

using Row = std::vector<std::string>;

inline Row split(std::string_view line) {
  Row out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    out.emplace_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

struct Table {
  Row header;
  std::vector<Row> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line per row
};

/// Parses text whose header must equal `expected` exactly. Blank lines are
/// skipped; every row must have the header's field count.
inline Table parse(std::string_view text, const Row& expected, const std::string& file) {
  Table t;
  std::size_t line_no = 0, pos = 0;
  bool have_header = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    Row row = split(line);
    if (!have_header) {
      if (row != expected) {
        std::string want;
        for (std::size_t i = 0; i < expected.size(); ++i) want += (i ? "," : "") + expected[i];
        throw ParseError(file, line_no, "expected header '" + want + "'");
      }
      t.header = std::move(row);
      have_header = true;
      continue;
    }
    if (row.size() != expected.size()) {
      throw ParseError(file, line_no,
                       "expected " + std::to_string(expected.size()) + " fields, got " + std::to_string(row.size()));
    }
    t.rows.push_back(std::move(row));
    t.line_numbers.push_back(line_no);
  }
  if (!have_header) throw ParseError(file, 1, "missing header");
  return t;
}

inline Table load(const std::filesystem::path& path, const Row& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(text, expected, path.string());
}

inline std::int64_t to_int(const std::string& s, const std::string& file, std::size_t line, const char* field) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(file, line, std::string("bad integer for ") + field + ": '" + s + "'");
  }
  return v;
}

inline double to_double(const std::string& s, const std::string& file, std::size_t line, const char* field) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(file, line, std::string("bad number for ") + field + ": '" + s + "'");
  }
  return v;
}

inline void check_field(const std::string& value, const char* what) {
  if (value.find_first_of(",\n\r") != std::string::npos) {
    throw Error(std::string(what) + " '" + value + "' contains a comma or newline");
  }
}

}  // namespace roadinspect::csv
