#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace julesz {

using KeyValues = std::map<std::string, std::string>;

/// Parses flat `key=value` lines. Blank lines and lines starting with '#' are
/// skipped; whitespace around keys and values is trimmed. Throws FormatError
/// naming the line on malformed input or a repeated key.
KeyValues parse_key_values(const std::string& text, const std::string& source = "<text>");
KeyValues read_key_values(const std::filesystem::path& path);

/// One `key=value` line per entry, keys in sorted order.
std::string format_key_values(const KeyValues& kv);
void write_key_values(const KeyValues& kv, const std::filesystem::path& path);

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

}  // namespace julesz
