#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace ignd {

/// Shortest decimal that round-trips to the same double ("nan", "inf", "-inf"
/// for non-finite values). Locale independent, so CSVs are byte-reproducible.
std::string format_double(double value);

std::vector<std::string> split_csv_line(std::string_view line, char delimiter = ',');

/// Incrementally flushed CSV writer over a file or a caller-owned stream.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  /// Writes rows only; the caller emits any header.
  explicit CsvWriter(std::ostream& os) : os_(&os) {}

  CsvWriter& row(const std::vector<std::string>& cells);

  CsvWriter& field(std::string_view text);
  CsvWriter& field(double value);
  CsvWriter& field(std::int64_t value);
  CsvWriter& field(int value) { return field(static_cast<std::int64_t>(value)); }
  CsvWriter& field(std::uint64_t value);
  void end_row();

 private:
  std::ofstream file_;
  std::ostream* os_;
  bool row_started_ = false;
};

}  // namespace ignd
