#ifndef REGTPS_IO_CSV_HPP
#define REGTPS_IO_CSV_HPP

#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "regtps/error.hpp"

namespace regtps::io {

/// Round-trip-safe text for a double (17 significant digits); NaN prints as NA.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Row-oriented CSV writer. Fields containing separators or quotes are quoted.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(&out) {}

  CsvWriter& header(std::initializer_list<std::string> names) {
    return header(std::vector<std::string>(names));
  }
  CsvWriter& header(const std::vector<std::string>& names) {
    for (const auto& n : names) field(n);
    return end_row();
  }

  CsvWriter& field(const std::string& s) {
    sep();
    if (s.find_first_of(",\"\n") == std::string::npos) {
      *out_ << s;
    } else {
      *out_ << '"';
      for (char c : s) {
        if (c == '"') *out_ << '"';
        *out_ << c;
      }
      *out_ << '"';
    }
    return *this;
  }
  CsvWriter& field(const char* s) { return field(std::string(s)); }
  CsvWriter& field(double v) {
    sep();
    *out_ << format_double(v);
    return *this;
  }
  CsvWriter& field(int v) { return field(static_cast<long long>(v)); }
  CsvWriter& field(long v) { return field(static_cast<long long>(v)); }
  CsvWriter& field(unsigned long v) { return field(static_cast<long long>(v)); }
  CsvWriter& field(long long v) {
    sep();
    *out_ << v;
    return *this;
  }
  CsvWriter& field(bool v) { return field(static_cast<long long>(v ? 1 : 0)); }

  CsvWriter& end_row() {
    *out_ << '\n';
    first_ = true;
    return *this;
  }

 private:
  void sep() {
    if (!first_) *out_ << ',';
    first_ = false;
  }
  std::ostream* out_;
  bool first_ = true;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

/// Whole-file CSV table with a header row.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  bool has(const std::string& name) const {
    for (const auto& c : columns)
      if (c == name) return true;
    return false;
  }

  std::size_t index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw SchemaError("missing column '" + name + "'");
  }
};

inline CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV input");
  t.columns = split_csv_line(line);
  for (auto& c : t.columns) {
    while (!c.empty() && (c.back() == ' ' || c.back() == '\t')) c.pop_back();
    while (!c.empty() && (c.front() == ' ' || c.front() == '\t')) c.erase(c.begin());
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto row = split_csv_line(line);
    if (row.size() != t.columns.size()) {
      throw DataError("line " + std::to_string(lineno) + " has " + std::to_string(row.size()) +
                      " fields, expected " + std::to_string(t.columns.size()));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return read_csv(in);
}

inline double parse_double(const std::string& s, const std::string& what) {
  if (s == "NA" || s == "nan" || s == "NaN" || s.empty()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("cannot parse '" + s + "' as a number in " + what);
  }
}

}  // namespace regtps::io

#endif
