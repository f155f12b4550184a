#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace expertroute::text {

/// True for the code points Unicode classifies as White_Space.
bool is_unicode_space(char32_t cp) noexcept;

/// Splits UTF-8 text on Unicode whitespace. Empty pieces are dropped.
/// Invalid UTF-8 bytes are treated as non-space and kept verbatim.
std::vector<std::string> split_whitespace(std::string_view text);

/// ASCII case folding; bytes >= 0x80 are left untouched.
std::string ascii_lower(std::string_view text);

/// Removes leading and trailing ASCII punctuation.
std::string_view strip_punctuation(std::string_view token) noexcept;

/// Trims Unicode whitespace from both ends.
std::string_view trim(std::string_view text);

/// Decodes UTF-8 into code points; malformed bytes decode as U+FFFD.
std::u32string decode_utf8(std::string_view text);

void append_utf8(std::string& out, char32_t cp);

}  // namespace expertroute::text
