#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace coop {

// Numeric table with leading `#` comment lines and a single header row.
struct CsvTable {
    std::vector<std::string> comments;  // without the leading "# "
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const;
};

// Shortest text that reads back to the same double.
std::string format_number(double value);

std::string to_csv(const CsvTable& table);
CsvTable parse_csv(const std::string& text);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace coop
