#pragma once

// File output for the CLI. Every failure is an Io error.

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mflsi::io {

using Json = nlohmann::ordered_json;

/// 17 significant digits, enough to round-trip a double.
std::string format_double(double v);

void ensure_directory(const std::filesystem::path& dir);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Index of a named column; throws Io when absent.
  std::size_t column(const std::string& name) const;
};

/// Numeric CSV with one header line; `#` lines are skipped.
CsvTable read_csv(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const Json& value);
Json read_json(const std::filesystem::path& path);

}  // namespace mflsi::io
