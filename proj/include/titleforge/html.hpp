#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace titleforge::html {

// Decodes named (&lt; &gt; &amp; &quot; &apos; &nbsp; ...) and numeric entities.
// Unknown entities are left verbatim.
std::string decode_entities(std::string_view text);

struct BodyParts {
    // Text content of each <code> element in document order, entity-decoded,
    // nested markup removed. Blank elements are dropped.
    std::vector<std::string> code_blocks;
    // Everything outside <code>, markup stripped, whitespace collapsed and trimmed.
    std::string description;
};

BodyParts split_body(std::string_view body_html);

// True when at least one <code> element has non-blank text.
bool has_code(std::string_view body_html);

// Collapses whitespace runs to one space and trims both ends.
std::string normalize_whitespace(std::string_view text);

}  // namespace titleforge::html
