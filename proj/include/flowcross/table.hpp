#pragma once

// CSV tables with a fixed column schema, written atomically.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <unistd.h>
#include <variant>
#include <vector>

#include "flowcross/errors.hpp"

namespace flowcross {

enum class ColumnType { kReal, kInteger, kText };

struct Column {
  std::string name;
  ColumnType type = ColumnType::kReal;
};

using Schema = std::vector<Column>;
using Cell = std::variant<double, std::int64_t, std::string>;
using Row = std::vector<Cell>;

/// Positional decimal text with 17 significant digits (trailing zeros after
/// the point dropped), so every finite double reads back exactly. Never uses
/// exponent notation. Non-finite values print as nan, inf, -inf.
inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return std::signbit(v) ? "-0" : "0";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  const std::string s = buf;
  const bool neg = s[0] == '-';
  const std::size_t m0 = neg ? 1 : 0;
  const std::size_t epos = s.find('e');
  std::string digits;
  for (std::size_t i = m0; i < epos; ++i) {
    if (s[i] != '.') digits += s[i];
  }
  const int exp10 = std::stoi(s.substr(epos + 1));
  std::string out;
  const int point = exp10 + 1;  // digits before the decimal point
  const int nd = static_cast<int>(digits.size());
  if (point <= 0) {
    out = "0." + std::string(static_cast<std::size_t>(-point), '0') + digits;
  } else if (point >= nd) {
    out = digits + std::string(static_cast<std::size_t>(point - nd), '0');
  } else {
    out = digits.substr(0, static_cast<std::size_t>(point)) + "." +
          digits.substr(static_cast<std::size_t>(point));
  }
  if (out.find('.') != std::string::npos) {
    while (out.back() == '0') out.pop_back();
    if (out.back() == '.') out.pop_back();
  }
  return neg ? "-" + out : out;
}

namespace detail {

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline bool cell_matches(const Cell& c, ColumnType t) {
  switch (t) {
    case ColumnType::kReal:
      return std::holds_alternative<double>(c);
    case ColumnType::kInteger:
      return std::holds_alternative<std::int64_t>(c);
    case ColumnType::kText:
      return std::holds_alternative<std::string>(c);
  }
  return false;
}

}  // namespace detail

/// Throws DomainError unless every row has one cell of the declared type
/// per column.
inline void check_schema(const std::vector<Row>& rows, const Schema& schema) {
  if (schema.empty()) throw DomainError("table schema has no columns");
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != schema.size()) {
      throw DomainError("row " + std::to_string(r) + " has " + std::to_string(rows[r].size()) +
                        " cells, schema has " + std::to_string(schema.size()));
    }
    for (std::size_t c = 0; c < schema.size(); ++c) {
      if (!detail::cell_matches(rows[r][c], schema[c].type)) {
        throw DomainError("row " + std::to_string(r) + ": column '" + schema[c].name +
                          "' has the wrong type");
      }
    }
  }
}

/// CSV text: header line of schema names, then one line per row, each
/// terminated by '\n'.
inline std::string render_csv(const std::vector<Row>& rows, const Schema& schema) {
  check_schema(rows, schema);
  std::string out;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (c) out += ',';
    out += detail::csv_escape(schema[c].name);
  }
  out += '\n';
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ',';
      if (const auto* d = std::get_if<double>(&row[c])) {
        out += format_real(*d);
      } else if (const auto* i = std::get_if<std::int64_t>(&row[c])) {
        out += std::to_string(*i);
      } else {
        out += detail::csv_escape(std::get<std::string>(row[c]));
      }
    }
    out += '\n';
  }
  return out;
}

/// Writes `content` to `path` via a temporary file in the same directory and
/// a rename, so a file with the final name is always complete.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + tmp.string());
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    f.flush();
    if (!f) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

/// Validates rows against the schema (before touching the filesystem) and
/// writes them as CSV.
inline void emit_table(const std::vector<Row>& rows, const Schema& schema,
                       const std::filesystem::path& path) {
  write_file_atomic(path, render_csv(rows, schema));
}

}  // namespace flowcross
