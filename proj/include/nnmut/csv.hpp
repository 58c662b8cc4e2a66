#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nnmut::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name, or npos.
  [[nodiscard]] std::size_t column(std::string_view name) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

/// RFC 4180: comma separated, double-quoted fields may contain commas,
/// newlines and doubled quotes. Accepts LF or CRLF line endings. The first
/// record is the header; blank trailing lines are ignored.
Table parse(std::string_view text);
Table read(const std::filesystem::path& path);

/// Quotes the field only when it contains a comma, quote or line break.
std::string escape(std::string_view field);
std::string join(std::span<const std::string> fields);

/// Parses a finite real, tolerating surrounding spaces. Returns false on
/// failure.
bool parse_real(std::string_view text, double& out);

/// Shortest decimal that round-trips to the same double.
std::string format_real(double value);

}  // namespace nnmut::csv
