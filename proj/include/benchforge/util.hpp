#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace benchforge::util {

// --- text -------------------------------------------------------------

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
bool starts_with(std::string_view s, std::string_view prefix);

// Shortest round-trip decimal rendering (std::to_chars).  "1" for 1.0.
std::string render_double(double d);
std::string render_int(std::int64_t i);

// --- time -------------------------------------------------------------

// ISO-8601 UTC with millisecond precision, e.g. 2026-08-15T09:30:12.345Z
std::string utc_iso_now();
// Compact UTC stamp used in identifiers: YYYYMMDDThhmmssZ
std::string utc_compact_stamp(std::chrono::system_clock::time_point tp);

// --- identifiers --------------------------------------------------------

// Lowercase base32 alphabet without the look-alikes i, l, o, u.
std::string random_base32(std::size_t length);

// --- filesystem ---------------------------------------------------------

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);
// Write to a sibling temp file, fsync, then rename over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
void ensure_dir(const std::filesystem::path& path);
// Absolute path to the currently running executable ("" if unknown).
std::filesystem::path current_executable();

// --- checksums ----------------------------------------------------------

std::uint32_t crc32(std::string_view data);
std::string crc32_hex(std::string_view data);  // 8 lowercase hex digits

}  // namespace benchforge::util
