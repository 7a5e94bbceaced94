#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace ankle_msk {

std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);
// Writes through a temporary sibling and renames into place.
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace ankle_msk
