#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace annot {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Stable 64-bit seed derived from a parent seed and a stage label, so that
// sub-configs get independent but reproducible streams.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

} // namespace annot
