#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace cer::util {

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);
std::string base64_encode(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames, creating parent directories.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Deterministic 64-bit mix of a seed and a tag (splitmix64 over FNV-1a of the tag).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

}  // namespace cer::util
