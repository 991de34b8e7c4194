#include "titleforge/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "titleforge/error.hpp"

namespace titleforge {
namespace {

bool is_word_byte(unsigned char c) { return c >= 0x80 || std::isalnum(c) || c == '_'; }

std::string byte_token(unsigned b) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "<0x%02X>", b);
    return buf;
}

const std::vector<std::string>& special_tokens() {
    static const std::vector<std::string> kSpecial = {"<pad>", "</s>", "<unk>", "<s>", "<soft>", "<code>",
                                                      std::string(Tokenizer::kMarker)};
    return kSpecial;
}

}  // namespace

std::vector<Piece> split_pieces(std::string_view text) {
    std::vector<Piece> pieces;
    bool space = false;
    std::size_t i = 0;
    while (i < text.size()) {
        auto c = static_cast<unsigned char>(text[i]);
        if (c < 0x80 && std::isspace(c)) {
            space = true;
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        if (is_word_byte(c)) {
            while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
        }
        pieces.push_back(Piece{std::string(text.substr(i, j - i)), space});
        space = false;
        i = j;
    }
    return pieces;
}

Tokenizer::Tokenizer() {
    for (const auto& s : special_tokens()) add(s);
    for (unsigned b = 0; b < 256; ++b) add(byte_token(b));
}

void Tokenizer::add(std::string token) {
    auto id = static_cast<TokenId>(tokens_.size());
    if (!index_.emplace(token, id).second) {
        throw InvalidInput("duplicate token in vocabulary: " + token);
    }
    tokens_.push_back(std::move(token));
}

Tokenizer Tokenizer::train(const std::vector<std::string>& texts, std::size_t max_vocab, std::size_t min_count) {
    std::map<std::string, std::size_t> counts;
    for (const auto& text : texts) {
        for (auto& piece : split_pieces(text)) {
            // Pieces are counted both bare and marked so segment-initial spellings are covered.
            ++counts[std::string(kMarker) + piece.text];
            if (!piece.space_before) ++counts[piece.text];
        }
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Tokenizer tok;
    for (const auto& [piece, count] : ranked) {
        if (tok.size() >= max_vocab || count < min_count) break;
        if (!tok.index_.count(piece)) tok.add(piece);
    }
    return tok;
}

const std::string& Tokenizer::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw InvalidInput("token id out of range: " + std::to_string(id));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Tokenizer::find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<TokenId> Tokenizer::encode(std::string_view text, bool leading_space) const {
    std::vector<TokenId> ids;
    auto pieces = split_pieces(text);
    for (std::size_t p = 0; p < pieces.size(); ++p) {
        bool space = pieces[p].space_before || (p == 0 && leading_space);
        const auto& body = pieces[p].text;
        if (space) {
            if (auto id = find(std::string(kMarker) + body)) {
                ids.push_back(*id);
                continue;
            }
            ids.push_back(kSpace);
        }
        if (auto id = find(body)) {
            ids.push_back(*id);
            continue;
        }
        for (unsigned char b : body) ids.push_back(kFirstByte + b);
    }
    return ids;
}

std::string Tokenizer::render(const std::vector<TokenId>& ids, bool keep_markers) const {
    std::string out;
    for (auto id : ids) {
        if (id == kPad || id == kEos || id == kBos || id == kUnk) continue;
        if (id == kSoft) {
            if (keep_markers) out += " [SOFT]";
            continue;
        }
        if (id == kCode) {
            if (keep_markers) out += " <code>";
            continue;
        }
        if (id == kSpace) {
            out += ' ';
            continue;
        }
        if (id >= kFirstByte && id < kFirstWord) {
            out += static_cast<char>(id - kFirstByte);
            continue;
        }
        const auto& t = token(id);
        if (t.compare(0, kMarker.size(), kMarker) == 0) {
            out += ' ';
            out.append(t, kMarker.size());
        } else {
            out += t;
        }
    }
    auto start = out.find_first_not_of(' ');
    return start == std::string::npos ? std::string() : out.substr(start);
}

std::string Tokenizer::decode(const std::vector<TokenId>& ids) const { return render(ids, false); }

std::string Tokenizer::display(const std::vector<TokenId>& ids) const { return render(ids, true); }

std::uint64_t Tokenizer::fingerprint() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& t : tokens_) {
        for (unsigned char c : t) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        h ^= 0xFF;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string Tokenizer::to_json() const {
    nlohmann::json j;
    j["format"] = "titleforge-word-byte-v1";
    j["tokens"] = tokens_;
    return j.dump(1);
}

Tokenizer Tokenizer::from_json(std::string_view text) {
    auto j = nlohmann::json::parse(text);
    if (j.value("format", "") != "titleforge-word-byte-v1") {
        throw InvalidInput("unsupported tokenizer format");
    }
    auto tokens = j.at("tokens").get<std::vector<std::string>>();
    Tokenizer base;
    if (tokens.size() < base.size() || !std::equal(base.tokens_.begin(), base.tokens_.end(), tokens.begin())) {
        throw InvalidInput("tokenizer file does not start with the reserved tokens");
    }
    for (std::size_t i = base.size(); i < tokens.size(); ++i) base.add(tokens[i]);
    return base;
}

Tokenizer Tokenizer::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open tokenizer file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json(buf.str());
}

void Tokenizer::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write tokenizer file " + path);
    out << to_json() << '\n';
}

}  // namespace titleforge
