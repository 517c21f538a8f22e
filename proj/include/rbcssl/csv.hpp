#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace rbc {

/// Minimal comma-separated tables: no quoting, so fields may not contain
/// commas or line breaks (writers reject them).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text, const std::string& origin);
CsvTable read_csv(const std::filesystem::path& path);
std::string format_csv(const CsvTable& table);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

}  // namespace rbc
