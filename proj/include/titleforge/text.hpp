#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace titleforge {

std::string to_lower_ascii(std::string_view s);

// The tokenizer shared by every metric and by the corpus length checks:
// ASCII punctuation becomes its own token, text is lowercased, and the
// result is split on Unicode whitespace. Other non-ASCII characters stay inside words.
std::vector<std::string> word_tokens(std::string_view text);

// Whitespace as Python's str.split() sees it.
bool is_unicode_space(char32_t c);

// Lowercase mapping for Latin, Greek, Cyrillic, Armenian and fullwidth Latin letters.
std::u32string unicode_lower(std::u32string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::vector<std::string> split(std::string_view text, char sep);

// Malformed UTF-8 sequences decode to U+FFFD.
std::u32string utf8_to_u32(std::string_view text);
std::string u32_to_utf8(std::u32string_view text);

// String.hashCode of the JVM, computed over the UTF-16 form of `text`.
std::int32_t java_string_hash(std::string_view text);

}  // namespace titleforge
