#include "cosbal/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cosbal/errors.hpp"

namespace cosbal::csv {

namespace {

bool needs_quoting(const std::string& s) {
  return s.find_first_of(",\"\n\r") != std::string::npos;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

// One pass over the text; handles quoted fields with doubled quotes.
std::vector<std::vector<std::string>> parse_rows(const std::string& text,
                                                 const std::string& origin) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool row_started = false;
  const std::size_t n = text.size();
  for (std::size_t i = 0; i < n; ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < n && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_started = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        row_started = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_started || !field.empty()) {
          row.push_back(std::move(field));
          field.clear();
          rows.push_back(std::move(row));
          row.clear();
        }
        row_started = false;
        break;
      default:
        field += c;
        row_started = true;
        break;
    }
  }
  if (in_quotes)
    throw IngestError(origin + ": unterminated quoted field");
  if (row_started || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::size_t Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw MissingColumnError(path + ": missing column '" + name + "'");
}

bool Table::has_column(const std::string& name) const {
  for (const auto& h : header)
    if (h == name) return true;
  return false;
}

Table read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

Table parse(const std::string& text, std::string origin) {
  auto rows = parse_rows(text, origin);
  if (rows.empty()) throw IngestError(origin + ": empty file (header required)");
  Table t;
  t.path = std::move(origin);
  t.header = std::move(rows.front());
  t.rows.assign(std::make_move_iterator(rows.begin() + 1),
                std::make_move_iterator(rows.end()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.rows[r].size() != t.header.size()) {
      throw IngestError(t.path + ": row " + std::to_string(r + 2) + " has " +
                        std::to_string(t.rows[r].size()) + " fields, expected " +
                        std::to_string(t.header.size()));
    }
  }
  return t;
}

std::string format_double(double v) {
  if (!std::isfinite(v))
    throw ValidationError("refusing to write non-finite value to CSV");
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

Writer::Writer(std::vector<std::string> header) : header_(std::move(header)) {}

void Writer::append_raw(std::vector<std::string> row) {
  if (row.size() != header_.size())
    throw DimensionMismatchError("csv row width does not match header");
  rows_.push_back(std::move(row));
}

std::string Writer::to_string() const {
  std::string out;
  auto emit_row = [&out](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += needs_quoting(row[i]) ? quote(row[i]) : row[i];
    }
    out += '\n';
  };
  emit_row(header_);
  for (const auto& r : rows_) emit_row(r);
  return out;
}

void Writer::save(const std::filesystem::path& path) const {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + path.string());
    out << to_string();
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace cosbal::csv
