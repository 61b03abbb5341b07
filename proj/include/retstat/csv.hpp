#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace retstat {

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double x);

/// Parses a full string as a double; throws ConfigError on trailing junk.
double parse_double(std::string_view text);

/// Writes `content` to `path` atomically enough for our purposes (write to a
/// temporary sibling, then rename).
void write_text_file(const std::filesystem::path& path, std::string_view content);

/// Minimal CSV writer: comma separated, no quoting (fields are numeric).
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}
  void header(const std::vector<std::string>& names);
  CsvWriter& field(double x);
  CsvWriter& field(long long x);
  CsvWriter& field(unsigned long long x);
  CsvWriter& field(unsigned long x) { return field(static_cast<unsigned long long>(x)); }
  CsvWriter& field(int x) { return field(static_cast<long long>(x)); }
  CsvWriter& field(std::string_view s);
  void end_row();

 private:
  void separator();
  std::ostream& out_;
  bool row_started_ = false;
};

}  // namespace retstat
