#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mathrag {

// -- strings ------------------------------------------------------------------

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

// Splits on runs of whitespace; no empty pieces.
std::vector<std::string> split_whitespace(std::string_view s);

// Number of whitespace-delimited pieces. Cheap stand-in for a tokenizer
// when counting budget consumption for mock backends.
std::size_t count_whitespace_pieces(std::string_view s);

// Keeps the first `max_pieces` whitespace-delimited pieces along with the
// whitespace that preceded each, so the kept prefix is byte-identical to
// the original text up to the cut.
std::string truncate_whitespace_pieces(std::string_view s, std::size_t max_pieces);

// Lowercased maximal [a-z0-9] runs, for lexical overlap scoring.
std::vector<std::string> alnum_tokens(std::string_view s);

// Replaces exactly one occurrence of `needle`; throws ValidationError if
// the needle appears zero or multiple times.
std::string replace_once(std::string_view haystack, std::string_view needle, std::string_view replacement);

bool contains(std::string_view haystack, std::string_view needle);

// -- rounding -----------------------------------------------------------------

// count/denom as a percentage in tenths, rounded half up. Integer-only so
// results are platform-stable: 92/1319 -> 70 (i.e. 7.0%).
std::int64_t percent_tenths(std::int64_t count, std::int64_t denom);

// "7.0%" / "83.2%" style rendering of percent_tenths. denom == 0 -> "n/a".
std::string format_percent(std::int64_t count, std::int64_t denom);

// -- filesystem ----------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

// Calls fn(line, line_number) for each newline-delimited line, skipping
// blank lines. Line numbers are 1-based. A missing trailing newline is fine.
void for_each_line(const std::string& text, const std::function<void(std::string_view, std::size_t)>& fn);

// -- hashing -------------------------------------------------------------------

// FNV-1a, used for feature hashing in the mock embedder.
std::uint64_t fnv1a64(std::string_view s);

// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

} // namespace mathrag
