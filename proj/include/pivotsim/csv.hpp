#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pivotsim/errors.hpp"

namespace pivotsim::csv {

/// Shortest decimal text that round-trips to the same double.
inline std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

inline double parse_number(std::string_view field) {
  if (field == "nan") return std::nan("");
  double v = 0.0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw Error(ErrorCode::ParseError, "not a number: '" + std::string(field) + "'");
  }
  return v;
}

/// Comma-separated writer with a header row and '.' decimals.
class Writer {
 public:
  Writer(std::ostream& out, std::span<const std::string> header) : out_(out), columns_(header.size()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) out_ << ',';
      out_ << header[i];
    }
    out_ << '\n';
  }

  void row(std::span<const double> values) {
    if (values.size() != columns_) {
      throw Error(ErrorCode::InvalidArgument, "csv row width does not match header");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) out_ << ',';
      out_ << format_number(values[i]);
    }
    out_ << '\n';
  }

  void row(std::initializer_list<double> values) {
    row(std::span<const double>(values.begin(), values.size()));
  }

 private:
  std::ostream& out_;
  std::size_t columns_;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // 1-based source line of each row

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw Error(ErrorCode::ParseError, "missing column '" + std::string(name) + "'");
  }
};

inline std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline Table parse(std::istream& in) {
  Table t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": expected " +
                                             std::to_string(t.header.size()) + " fields");
    }
    t.rows.push_back(std::move(fields));
    t.lines.push_back(lineno);
  }
  if (t.header.empty()) throw Error(ErrorCode::ParseError, "csv has no header row");
  return t;
}

inline Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  return parse(in);
}

}  // namespace pivotsim::csv
