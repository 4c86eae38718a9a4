#pragma once

// Minimal RFC 4180 CSV reading and writing. Lines starting with '#' before the
// header are metadata comments and are returned separately.

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mapval::io {

struct CsvTable {
  std::vector<std::string> comments;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return static_cast<int>(k);
    return -1;
  }
  bool has(const std::string& name) const { return column(name) >= 0; }
  int require(const std::string& name) const {
    const int c = column(name);
    if (c < 0) throw std::invalid_argument("CSV: missing column '" + name + "'");
    return c;
  }
};

namespace detail {

inline std::vector<std::string> split_record(const std::string& text, std::size_t& pos, bool& ok) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  ok = true;
  while (pos < text.size()) {
    const char c = text[pos];
    if (quoted) {
      if (c == '"') {
        if (pos + 1 < text.size() && text[pos + 1] == '"') {
          cur.push_back('"');
          pos += 2;
          continue;
        }
        quoted = false;
        ++pos;
        continue;
      }
      cur.push_back(c);
      ++pos;
      continue;
    }
    if (c == '"') {
      quoted = true;
      ++pos;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
      ++pos;
    } else if (c == '\r') {
      ++pos;
    } else if (c == '\n') {
      ++pos;
      break;
    } else {
      cur.push_back(c);
      ++pos;
    }
  }
  if (quoted) ok = false;
  fields.push_back(std::move(cur));
  return fields;
}

}  // namespace detail

inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::size_t pos = 0;
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF && static_cast<unsigned char>(text[1]) == 0xBB &&
      static_cast<unsigned char>(text[2]) == 0xBF)
    pos = 3;
  while (pos < text.size() && text[pos] == '#') {
    const std::size_t end = text.find('\n', pos);
    std::string line = text.substr(pos + 1, end == std::string::npos ? std::string::npos : end - pos - 1);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    t.comments.push_back(line);
    pos = end == std::string::npos ? text.size() : end + 1;
  }
  bool ok = true;
  if (pos >= text.size()) throw std::invalid_argument("CSV: no header row");
  t.header = detail::split_record(text, pos, ok);
  if (!ok) throw std::invalid_argument("CSV: unterminated quote in header");
  std::size_t line_no = 1;
  while (pos < text.size()) {
    ++line_no;
    auto rec = detail::split_record(text, pos, ok);
    if (!ok) throw std::invalid_argument("CSV: unterminated quote at record " + std::to_string(line_no));
    if (rec.size() == 1 && rec[0].empty()) continue;
    if (rec.size() != t.header.size())
      throw std::invalid_argument("CSV: record " + std::to_string(line_no) + " has " + std::to_string(rec.size()) +
                                  " fields, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(rec));
  }
  return t;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline CsvTable read_csv(const std::string& path) {
  try {
    return parse_csv(read_file(path));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

/// Shortest round-trip-stable representation is not needed here; 12
/// significant digits keep files compact and deterministic.
inline std::string format_number(double v, int digits = 12) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header, std::vector<std::string> comments = {})
      : width_(header.size()) {
    for (const auto& c : comments) out_ << '#' << c << '\n';
    write_row(header);
  }
  void write_row(const std::vector<std::string>& fields) {
    if (fields.size() != width_) throw std::logic_error("CsvWriter: row width differs from header");
    for (std::size_t k = 0; k < fields.size(); ++k) {
      if (k) out_ << ',';
      out_ << csv_escape(fields[k]);
    }
    out_ << '\n';
  }
  std::string str() const { return out_.str(); }

 private:
  std::size_t width_;
  std::ostringstream out_;
};

inline double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(what + ": '" + s + "' is not a number");
  }
}

inline long parse_long(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used != s.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(what + ": '" + s + "' is not an integer");
  }
}

}  // namespace mapval::io
