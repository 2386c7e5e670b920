#pragma once

#include <map>
#include <string>
#include <vector>

namespace choicelab::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column, or throws MissingColumn.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
};

// Reads a delimiter-separated UTF-8 table with a mandatory header row.
// Double-quoted fields may contain the delimiter; "" inside quotes is a
// literal quote.
Table read_file(const std::string& path, char delimiter = ',');
Table read_string(const std::string& text, char delimiter = ',');

void write_file(const std::string& path, const Table& table, char delimiter = ',');
std::string to_string(const Table& table, char delimiter = ',');

}  // namespace choicelab::csv
