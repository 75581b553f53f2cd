#pragma once

#include <charconv>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace hybridtree::detail {

// Shortest representation that parses back to the same double. Plain
// notation is kept unless it is much longer (0.0002, not 2e-04).
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string shortest(buf, res.ptr);
  char fixed[400];
  auto rf = std::to_chars(fixed, fixed + sizeof(fixed), v, std::chars_format::fixed);
  if (rf.ec == std::errc{} && rf.ptr - fixed <= static_cast<std::ptrdiff_t>(shortest.size()) + 4)
    return std::string(fixed, rf.ptr);
  return shortest;
}

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

struct CsvRecord {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based line where the record starts
};

// RFC-4180 reader: quoted fields, doubled quotes, embedded newlines, CRLF.
// Returns false at end of input.
inline bool read_csv_record(std::istream& in, CsvRecord& rec, std::size_t& line) {
  rec.fields.clear();
  rec.line = line + 1;
  std::string field;
  bool in_quotes = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      rec.fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\r') {
      if (in.peek() == '\n') continue;
      ++line;
      rec.fields.push_back(std::move(field));
      return true;
    } else if (c == '\n') {
      ++line;
      rec.fields.push_back(std::move(field));
      return true;
    } else {
      field.push_back(c);
    }
  }
  if (!any) return false;
  ++line;
  rec.fields.push_back(std::move(field));
  return true;
}

inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << csv_escape(fields[i]);
  }
  out << '\n';
}

}  // namespace hybridtree::detail
