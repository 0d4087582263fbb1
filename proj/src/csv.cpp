#include "ignd/csv.hpp"

#include <charconv>
#include <cmath>

#include "ignd/errors.hpp"

namespace ignd {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split_csv_line(std::string_view line, char delimiter) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delimiter) {
      out.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  out.push_back(std::move(cell));
  return out;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : file_(path, std::ios::trunc), os_(&file_) {
  if (!file_) throw Error("cannot open " + path.string() + " for writing");
  row(header);
}

CsvWriter& CsvWriter::row(const std::vector<std::string>& cells) {
  for (const auto& c : cells) field(std::string_view(c));
  end_row();
  return *this;
}

CsvWriter& CsvWriter::field(std::string_view text) {
  if (row_started_) *os_ << ',';
  row_started_ = true;
  if (text.find_first_of(",\"\n") != std::string_view::npos) {
    *os_ << '"';
    for (char c : text) {
      if (c == '"') *os_ << '"';
      *os_ << c;
    }
    *os_ << '"';
  } else {
    *os_ << text;
  }
  return *this;
}

CsvWriter& CsvWriter::field(double value) { return field(std::string_view(format_double(value))); }

CsvWriter& CsvWriter::field(std::int64_t value) {
  return field(std::string_view(std::to_string(value)));
}

CsvWriter& CsvWriter::field(std::uint64_t value) {
  return field(std::string_view(std::to_string(value)));
}

void CsvWriter::end_row() {
  *os_ << '\n';
  os_->flush();
  row_started_ = false;
}

}  // namespace ignd
