#pragma once

// Small helpers shared by the text file formats. Doubles are written in the
// shortest form that parses back to the same bits.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace fairmargin::textio {

std::string format_double(double v);

/// Throws ParseError(what) on anything but a complete, finite number.
double parse_double(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

std::string read_file(const std::string& path);
/// Writes via a temporary sibling and rename. Throws IoError.
void write_file(const std::string& path, std::string_view contents);

/// Line cursor that tracks 1-based line numbers for error messages.
class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}
  bool next(std::string_view& line);
  std::size_t line_number() const noexcept { return line_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

}  // namespace fairmargin::textio
