#include "titleforge/html.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <utility>

namespace titleforge::html {
namespace {

void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
        cp = 0xFFFD;
    }
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

constexpr std::array<std::pair<std::string_view, std::uint32_t>, 14> kNamedEntities{{
    {"amp", '&'},     {"lt", '<'},       {"gt", '>'},       {"quot", '"'},     {"apos", '\''},
    {"nbsp", 0xA0},   {"copy", 0xA9},    {"reg", 0xAE},     {"hellip", 0x2026}, {"mdash", 0x2014},
    {"ndash", 0x2013}, {"rsquo", 0x2019}, {"lsquo", 0x2018}, {"times", 0xD7},
}};

bool is_block_tag(std::string_view name) {
    static constexpr std::array<std::string_view, 22> kBlock{
        "p",  "div", "br", "li", "ul", "ol", "pre", "blockquote", "h1", "h2", "h3",
        "h4", "h5",  "h6", "hr", "table", "tr", "td", "th", "dl", "dt", "dd"};
    return std::find(kBlock.begin(), kBlock.end(), name) != kBlock.end();
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

struct Tag {
    std::string name;
    bool closing = false;
    bool self_closing = false;
};

// Parses the tag starting at body[pos] == '<'. Returns the index one past '>' or npos
// if this '<' does not open a tag (then it is literal text).
std::size_t scan_tag(std::string_view body, std::size_t pos, Tag& tag) {
    std::size_t i = pos + 1;
    if (i >= body.size()) {
        return std::string_view::npos;
    }
    if (body.compare(i, 3, "!--") == 0) {
        auto end = body.find("-->", i + 3);
        tag = Tag{"!--", false, true};
        return end == std::string_view::npos ? body.size() : end + 3;
    }
    tag.closing = body[i] == '/';
    if (tag.closing) {
        ++i;
    }
    if (i >= body.size() || !(std::isalpha(static_cast<unsigned char>(body[i])) || body[i] == '!')) {
        return std::string_view::npos;
    }
    std::size_t name_start = i;
    while (i < body.size() && (std::isalnum(static_cast<unsigned char>(body[i])) || body[i] == '!')) {
        ++i;
    }
    tag.name = lower(body.substr(name_start, i - name_start));
    char quote = 0;
    for (; i < body.size(); ++i) {
        char c = body[i];
        if (quote) {
            if (c == quote) quote = 0;
        } else if (c == '"' || c == '\'') {
            quote = c;
        } else if (c == '>') {
            tag.self_closing = i > pos && body[i - 1] == '/';
            return i + 1;
        }
    }
    return body.size();
}

bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string trim_code(std::string code) {
    while (!code.empty() && std::isspace(static_cast<unsigned char>(code.back()))) {
        code.pop_back();
    }
    // Drop leading blank lines, keep the first line's indentation.
    std::size_t start = 0;
    for (std::size_t i = 0; i < code.size(); ++i) {
        if (code[i] == '\n') {
            start = i + 1;
        } else if (!std::isspace(static_cast<unsigned char>(code[i]))) {
            break;
        }
    }
    return code.substr(start);
}

}  // namespace

std::string decode_entities(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '&') {
            out += text[i];
            continue;
        }
        auto semi = text.find(';', i + 1);
        if (semi == std::string_view::npos || semi - i > 12) {
            out += '&';
            continue;
        }
        std::string_view entity = text.substr(i + 1, semi - i - 1);
        bool decoded = false;
        if (!entity.empty() && entity[0] == '#') {
            std::uint32_t cp = 0;
            bool hex = entity.size() > 1 && (entity[1] == 'x' || entity[1] == 'X');
            std::string_view digits = entity.substr(hex ? 2 : 1);
            bool ok = !digits.empty();
            for (char c : digits) {
                int v;
                if (c >= '0' && c <= '9') v = c - '0';
                else if (hex && c >= 'a' && c <= 'f') v = c - 'a' + 10;
                else if (hex && c >= 'A' && c <= 'F') v = c - 'A' + 10;
                else { ok = false; break; }
                cp = cp * (hex ? 16 : 10) + static_cast<std::uint32_t>(v);
                if (cp > 0x10FFFF) { ok = false; break; }
            }
            if (ok) {
                append_utf8(out, cp);
                decoded = true;
            }
        } else {
            for (const auto& [name, cp] : kNamedEntities) {
                if (entity == name) {
                    append_utf8(out, cp);
                    decoded = true;
                    break;
                }
            }
        }
        if (decoded) {
            i = semi;
        } else {
            out += '&';
        }
    }
    return out;
}

std::string normalize_whitespace(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out += ' ';
            pending_space = false;
        }
        out += static_cast<char>(c);
    }
    return out;
}

BodyParts split_body(std::string_view body) {
    BodyParts parts;
    std::string description;
    std::string code;
    std::string pending_text;
    int code_depth = 0;

    auto flush_text = [&] {
        if (pending_text.empty()) return;
        std::string decoded = decode_entities(pending_text);
        (code_depth > 0 ? code : description) += decoded;
        pending_text.clear();
    };

    std::size_t i = 0;
    while (i < body.size()) {
        if (body[i] != '<') {
            pending_text += body[i++];
            continue;
        }
        Tag tag;
        std::size_t next = scan_tag(body, i, tag);
        if (next == std::string_view::npos) {
            pending_text += body[i++];
            continue;
        }
        flush_text();
        if (tag.name == "code" && !tag.self_closing) {
            if (!tag.closing) {
                if (code_depth++ == 0) {
                    code.clear();
                }
            } else if (code_depth > 0 && --code_depth == 0) {
                if (!blank(code)) {
                    parts.code_blocks.push_back(trim_code(std::move(code)));
                }
                code.clear();
            }
        } else if (code_depth == 0 && is_block_tag(tag.name)) {
            description += ' ';
        }
        i = next;
    }
    flush_text();
    if (code_depth > 0 && !blank(code)) {
        // Unterminated <code>: keep what was collected.
        parts.code_blocks.push_back(trim_code(std::move(code)));
    }
    parts.description = normalize_whitespace(description);
    return parts;
}

bool has_code(std::string_view body) {
    return !split_body(body).code_blocks.empty();
}

}  // namespace titleforge::html
