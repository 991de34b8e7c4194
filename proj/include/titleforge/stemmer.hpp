#pragma once

#include <string>
#include <string_view>

namespace titleforge {

// Snowball English (Porter2) stemmer. Input is UTF-8 and expected lowercase;
// non-ASCII characters count as consonants.
std::string english_stem(std::string_view word);

}  // namespace titleforge
