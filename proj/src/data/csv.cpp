#include <fstream>

#include "ids/data.hpp"
#include "ids/errors.hpp"

namespace ids {

void RawTable::check_rectangular() const {
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != columns.size()) {
      throw InputError("row " + std::to_string(r + 1) + " has " + std::to_string(rows[r].size()) +
                       " cells, header has " + std::to_string(columns.size()));
    }
  }
}

std::vector<std::string> split_csv_line(const std::string& line, char delimiter) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cell += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == delimiter) {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell += ch;
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

RawTable read_csv(const std::string& path, char delimiter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  RawTable table;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (header) {
      // Strip a UTF-8 byte order mark.
      if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
      if (line.empty()) continue;
      table.columns = split_csv_line(line, delimiter);
      header = false;
      continue;
    }
    if (line.empty()) continue;
    table.rows.push_back(split_csv_line(line, delimiter));
  }
  if (header) throw InputError("empty file: " + path);
  table.check_rectangular();
  return table;
}

namespace {

std::string quote_if_needed(const std::string& cell, char delimiter) {
  if (cell.find(delimiter) == std::string::npos && cell.find('"') == std::string::npos &&
      cell.find('\n') == std::string::npos) {
    return cell;
  }
  std::string out = "\"";
  for (char ch : cell) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

void write_row(std::ostream& out, const std::vector<std::string>& cells, char delimiter) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out << delimiter;
    out << quote_if_needed(cells[i], delimiter);
  }
  out << '\n';
}

}  // namespace

void write_csv(const std::string& path, const RawTable& table, char delimiter) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  write_row(out, table.columns, delimiter);
  for (const auto& row : table.rows) write_row(out, row, delimiter);
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace ids
