#pragma once

// Minimal RFC 4180 style CSV. Lines starting with '#' before the header are
// provenance comments and are skipped on read.

#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "delaysense/error.hpp"

namespace delaysense::csv {

using Row = std::vector<std::string>;

struct Table {
  std::string source;  // file name for error messages
  Row header;
  std::vector<Row> rows;
  std::vector<std::size_t> line_numbers;  // 1-based line of each row

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  }

  std::size_t require_column(std::string_view name) const {
    if (auto c = column(name)) return *c;
    throw Error(ErrorCode::ValidationError, source + ": missing column '" + std::string(name) + "'");
  }

  std::string where(std::size_t row) const { return source + ":" + std::to_string(line_numbers.at(row)); }
};

inline Row split_line(std::string_view line) {
  Row out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cell));
      cell.clear();
    } else {
      cell += ch;
    }
  }
  if (quoted) throw Error(ErrorCode::ParseError, "unterminated quoted field");
  out.push_back(std::move(cell));
  return out;
}

inline Table read(std::istream& in, const std::string& source) {
  Table t;
  t.source = source;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      if (line.empty() || line.front() == '#') continue;
      t.header = split_line(line);
      have_header = true;
      continue;
    }
    if (line.empty()) continue;
    Row r;
    try {
      r = split_line(line);
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError, source + ":" + std::to_string(line_no) + ": " + e.detail());
    }
    if (r.size() != t.header.size()) {
      throw Error(ErrorCode::ParseError, source + ":" + std::to_string(line_no) + ": expected " +
                                             std::to_string(t.header.size()) + " fields, got " +
                                             std::to_string(r.size()));
    }
    t.rows.push_back(std::move(r));
    t.line_numbers.push_back(line_no);
  }
  if (!have_header) throw Error(ErrorCode::ParseError, source + ": no header row");
  return t;
}

inline Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ValidationError, "cannot open '" + path + "'");
  return read(in, path);
}

inline std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

inline void write_row(std::ostream& os, const Row& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) os << ',';
    os << escape(row[i]);
  }
  os << '\n';
}

inline double parse_double(const Table& t, std::size_t row, std::size_t col) {
  const std::string& s = t.rows[row][col];
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError, t.where(row) + ": column '" + t.header[col] + "' is not a number: '" + s + "'");
  }
}

inline long parse_long(const Table& t, std::size_t row, std::size_t col) {
  const std::string& s = t.rows[row][col];
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError, t.where(row) + ": column '" + t.header[col] + "' is not an integer: '" + s + "'");
  }
}

}  // namespace delaysense::csv
