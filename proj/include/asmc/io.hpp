#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace asmc {

/// Shortest exact decimal form of a double (round-trips bit for bit).
std::string format_double(double v);

/// CSV assembly with RFC-4180 quoting; every file gets a header row and a
/// trailing comment line carrying the config hash.
class CsvBuilder {
 public:
  void header(const std::vector<std::string>& columns);
  void row(const std::vector<std::string>& cells);
  void comment(const std::string& text);
  const std::string& str() const { return out_; }

  static std::string cell(double v) { return format_double(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(std::uint64_t v) { return std::to_string(v); }

 private:
  void line(const std::vector<std::string>& cells);
  std::string out_;
};

/// Writes through a temp file in the same directory, then renames.
void write_file_atomic(const std::string& path, const std::string& content);

std::uint64_t fnv1a(const std::string& text);

std::string hex64(std::uint64_t v);

}  // namespace asmc
