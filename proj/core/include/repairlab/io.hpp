#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "repairlab/image.hpp"

namespace repairlab::io {

/// 8-bit RGB PNG. Values are clamped and rounded to the nearest level.
void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

/// Horizontal/vertical tiling of equally sized images into a grid.
Image tile_grid(const std::vector<std::vector<Image>>& rows, int pad = 2);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

/// gzip-compressed text file.
void write_gzip_text(const std::filesystem::path& path, std::string_view text);
std::string read_gzip_text(const std::filesystem::path& path);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

/// Minimal CSV: comma separated, no quoting (fields never contain commas here).
std::vector<std::string> split_csv_line(std::string_view line);
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace repairlab::io
