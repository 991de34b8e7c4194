#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace titleforge {

using TokenId = std::int64_t;

// Word-level vocabulary with byte fallback, so every string is encodable.
//
// Text is pre-split into pieces: runs of word characters ([A-Za-z0-9_] and any
// non-ASCII byte) and single ASCII punctuation characters. A piece preceded by
// whitespace carries the U+2581 marker, e.g. "▁list". Pieces missing from the
// vocabulary are spelled as the marker token followed by byte tokens <0xNN>.
// Whitespace runs decode as a single space.
class Tokenizer {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kEos = 1;
    static constexpr TokenId kUnk = 2;
    static constexpr TokenId kBos = 3;   // decoder start
    static constexpr TokenId kSoft = 4;  // placeholder whose embedding is replaced by a soft-prompt row
    static constexpr TokenId kCode = 5;  // "<code>" separator for the fine-tuning input layout
    static constexpr TokenId kSpace = 6;
    static constexpr TokenId kFirstByte = 7;
    static constexpr TokenId kFirstWord = kFirstByte + 256;

    static constexpr std::string_view kMarker = "\xE2\x96\x81";  // U+2581

    // Only special and byte tokens.
    Tokenizer();

    // Builds a vocabulary from `texts`: the `max_vocab - kFirstWord` most frequent pieces
    // occurring at least `min_count` times (frequency desc, then bytewise ascending).
    static Tokenizer train(const std::vector<std::string>& texts, std::size_t max_vocab,
                           std::size_t min_count = 1);

    static Tokenizer load(const std::string& path);
    void save(const std::string& path) const;
    std::string to_json() const;
    static Tokenizer from_json(std::string_view json);

    // `leading_space` marks the first piece as whitespace-preceded, which is how a segment
    // placed after another segment is spelled.
    std::vector<TokenId> encode(std::string_view text, bool leading_space = false) const;

    // Plain text: special tokens are dropped, leading whitespace trimmed.
    std::string decode(const std::vector<TokenId>& ids) const;
    // Human-readable rendering that keeps <code> and shows soft placeholders as [SOFT].
    std::string display(const std::vector<TokenId>& ids) const;

    std::size_t size() const { return tokens_.size(); }
    const std::string& token(TokenId id) const;
    std::optional<TokenId> find(std::string_view token) const;
    // Stable content hash of the vocabulary (FNV-1a over token strings).
    std::uint64_t fingerprint() const;

private:
    void add(std::string token);
    std::string render(const std::vector<TokenId>& ids, bool keep_markers) const;

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

struct Piece {
    std::string text;
    bool space_before = false;
};

// The pre-tokenization used by Tokenizer.
std::vector<Piece> split_pieces(std::string_view text);

}  // namespace titleforge
