#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace cosbal::csv {

// In-memory CSV table: header row plus string cells.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index by name; throws MissingColumnError with the file path.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;

  std::string path;  // origin, for error messages
};

Table read_file(const std::filesystem::path& path);
Table parse(const std::string& text, std::string origin = "<string>");

// Shortest round-trip decimal formatting; NaN/inf are rejected so that
// written files always re-parse.
std::string format_double(double v);

class Writer {
 public:
  explicit Writer(std::vector<std::string> header);

  void append_raw(std::vector<std::string> row);

  // Writes the file atomically-ish (temp then rename) with '\n' endings.
  void save(const std::filesystem::path& path) const;

  std::string to_string() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace cosbal::csv
