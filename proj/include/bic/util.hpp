#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace bic {

std::string sha256_hex(std::string_view bytes);
std::string base64_encode(std::string_view bytes);

/// Throws IoError when the file cannot be read.
std::string read_file(const std::filesystem::path& path);

/// Writes through a sibling temp file and renames it into place, so readers
/// never observe a partial file and concurrent same-path writers serialize.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// SHA-256 of a file's content.
std::string file_digest(const std::filesystem::path& path);

/// printf-style formatting into a std::string.
std::string strprintf(const char* fmt, ...) __attribute__((format(printf, 1, 2)));

}  // namespace bic
