#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace wavecomm::csv {

using Row = std::vector<std::string>;

// RFC 4180 style: quoted fields may contain commas, quotes ("") and newlines.
std::vector<Row> parse(std::string_view text);
std::vector<Row> read_file(const std::filesystem::path& path);

std::string escape(std::string_view field);
std::string format_row(const Row& row);

// Shortest representation that round-trips the double exactly.
std::string format_double(double value);

}  // namespace wavecomm::csv
