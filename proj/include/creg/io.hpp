#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace creg {

void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

}  // namespace creg
