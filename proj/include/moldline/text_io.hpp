#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace moldline {

/// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);

/// Strict parse of a '.'-separated decimal; nullopt-like failure signalled by false.
bool parse_double(std::string_view text, double& out);

std::vector<std::string_view> split_csv_line(std::string_view line);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace moldline
