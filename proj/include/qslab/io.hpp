#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace qslab {

uint64_t fnv1a64(std::string_view data);

std::string to_hex(uint64_t value);
uint64_t from_hex(const std::string& hex);

/// Reads a whole file; throws with the path on failure.
std::string read_text_file(const std::string& path);

/// Writes (creating parent directories); throws with the path on failure.
void write_text_file(const std::string& path, std::string_view content);

uint64_t file_digest(const std::string& path);

/// Fixed-decimal formatting used by every CSV export.
std::string format_fixed(double value, int decimals);

std::string utc_timestamp();          // 2026-01-02T03:04:05Z
std::string utc_timestamp_compact();  // 20260102-030405

}  // namespace qslab
