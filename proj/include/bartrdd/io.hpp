#pragma once

#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bartrdd::io {

/// Shortest representation that parses back to the same double.
std::string format_double(double v);

/// Parses a finite double from the whole of `text`; false on failure.
bool parse_double(std::string_view text, double& out);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column, or -1.
  int column(std::string_view name) const;
};

CsvTable read_csv_table(const std::filesystem::path& path);
std::vector<std::string> split_csv_line(std::string_view line);

void write_csv_row(std::ostream& os, std::span<const std::string> cells);
void write_csv_row(std::ostream& os, std::span<const double> cells);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace bartrdd::io
