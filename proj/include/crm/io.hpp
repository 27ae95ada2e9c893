#pragma once

#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "crm/error.hpp"
#include "crm/stats.hpp"

namespace crm::io {

namespace fs = std::filesystem;

/// Canonical number text: shortest representation that round-trips
/// (std::to_chars), empty string for a missing cell.
inline std::string format_number(double v) {
  if (is_missing(v)) return {};
  if (v == 0.0) v = 0.0;
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

/// Parses a numeric cell; empty text is the missing marker.
inline double parse_number(std::string_view s, const std::string& where) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty() || s == "NA" || s == "NaN") return kMissing;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw SchemaError("cannot parse number '" + std::string(s) + "' at " + where);
  return v;
}

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Reads a comma-separated file with a header line. Blank lines are skipped;
/// every data row must have exactly as many fields as the header.
inline CsvTable read_csv(const fs::path& path) {
  const std::string text = read_text(path);
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split(line);
    if (t.header.empty()) {
      for (auto& f : fields) f = trim(f);
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw SchemaError(path.filename().string() + " line " + std::to_string(lineno) + " has " +
                        std::to_string(fields.size()) + " fields, header has " +
                        std::to_string(t.header.size()));
    for (auto& f : fields) f = trim(f);
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) throw SchemaError(path.filename().string() + " is empty");
  return t;
}

/// Writes via a sibling temp file and rename, so readers never observe a
/// partially written file.
inline void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename onto " + path.string() + ": " + ec.message());
}

using KeyValues = std::map<std::string, std::string>;

/// Flat key=value text; '#' starts a comment line.
inline KeyValues parse_key_values(std::string_view text, const std::string& origin) {
  KeyValues kv;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + " line " + std::to_string(lineno) + ": expected key=value");
    kv[trim(std::string_view(t).substr(0, eq))] = trim(std::string_view(t).substr(eq + 1));
  }
  return kv;
}

inline std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

}  // namespace crm::io
