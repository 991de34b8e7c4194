#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace titleforge {

// UTC instant with millisecond resolution, as stored in the dump's CreationDate.
struct Timestamp {
    std::int64_t millis = 0;

    // Accepts "YYYY-MM-DDTHH:MM:SS[.fff]" with an optional trailing 'Z'.
    static Timestamp parse(std::string_view iso);
    // Always "YYYY-MM-DDTHH:MM:SS.fff".
    std::string to_string() const;

    auto operator<=>(const Timestamp&) const = default;
};

enum class PostType { question, answer, other };

struct QuestionPost {
    std::int64_t id = 0;
    PostType post_type = PostType::other;
    std::int64_t score = 0;
    std::string title;
    std::string body_html;
    std::vector<std::string> tags;
    Timestamp creation_date;
    std::optional<std::int64_t> accepted_answer_id;

    bool has_tag(std::string_view tag) const;
};

struct Quadruplet {
    std::string lang;
    std::string title;
    std::string description;
    std::string code;
    Timestamp creation_date;
    std::int64_t source_post_id = 0;

    bool operator==(const Quadruplet&) const = default;
};

struct CorpusSplit {
    std::string lang;
    std::vector<Quadruplet> train;
    std::vector<Quadruplet> valid;
    std::vector<Quadruplet> test;

    std::size_t size() const { return train.size() + valid.size() + test.size(); }
};

// ---------------------------------------------------------------------------
// Dump parsing

struct DumpStats {
    std::size_t rows = 0;
    std::size_t questions = 0;
    std::size_t rejected_rows = 0;  // missing Id / CreationDate / Body, or unparsable values
    std::size_t yielded = 0;
};

using PostSink = std::function<void(QuestionPost&&)>;

// Streams every question row (PostTypeId = 1) of a Posts.xml dump into `sink`.
// Memory use is bounded by the read buffer, not the dump size.
// Throws ParseError (with byte offset) on malformed XML.
DumpStats for_each_question(std::istream& xml, const PostSink& sink);

// As for_each_question, restricted to questions carrying `lang_tag`.
DumpStats parse_dump(std::istream& xml, std::string_view lang_tag, const PostSink& sink);

// Parses the dump's tag field: "<a><b>" (older dumps) or "|a|b|" (newer dumps).
std::vector<std::string> parse_tags(std::string_view field);

// ---------------------------------------------------------------------------
// Selection rules and extraction

struct SelectionRules {
    std::int64_t min_score = 10;
};

// Rule 1: score >= min_score. Rule 2: at least one <code> element with non-blank text.
// Rule 3: an accepted answer exists.
bool passes_rules(const QuestionPost& post, const SelectionRules& rules = {});

// Throws RejectedRecord if the body yields no code or the title has fewer than two words.
Quadruplet extract_quadruplet(const QuestionPost& post, std::string_view lang_tag);

// ---------------------------------------------------------------------------
// Splitting

struct SplitRatios {
    double train = 0.8;
    double valid = 0.1;
    double test = 0.1;
};

enum class ValidRounding {
    floor_ratio,      // valid = floor(valid_ratio * n)
    halve_remainder,  // valid = floor((n - train) / 2), the layout of the published per-language counts
};

struct SplitSizes {
    std::size_t train = 0;
    std::size_t valid = 0;
    std::size_t test = 0;
};

SplitSizes split_sizes(std::size_t n, const SplitRatios& ratios = {},
                       ValidRounding rounding = ValidRounding::floor_ratio);

// Chronological split: ascending creation_date, ties by source_post_id.
// Throws InvalidInput for fewer than 3 records, mixed languages, or ratios not summing to 1.
CorpusSplit split_corpus(std::vector<Quadruplet> quads, const SplitRatios& ratios = {},
                         ValidRounding rounding = ValidRounding::floor_ratio);

// ---------------------------------------------------------------------------
// Length statistics

struct LengthStats {
    std::size_t count = 0;
    std::size_t max = 0;
    double mean = 0.0;
    std::size_t mode = 0;  // smallest most-frequent length
    double median = 0.0;
    std::size_t min = 0;
    std::size_t threshold = 0;
    double fraction_below = 0.0;  // share of lengths strictly below `threshold`
};

LengthStats length_stats(std::vector<std::size_t> lengths, std::size_t threshold);

struct CorpusStats {
    LengthStats code;         // threshold 256
    LengthStats description;  // threshold 256
    LengthStats title;        // threshold 16
};

using LengthFn = std::function<std::size_t(std::string_view)>;

// Statistics over all records of the split. Throws InvalidInput on an empty split.
CorpusStats corpus_stats(const CorpusSplit& split, const LengthFn& token_length);

// ---------------------------------------------------------------------------
// Serialization: one JSON object per line,
// {lang, title, description, code, creation_date, source_post_id}.

std::string to_jsonl_line(const Quadruplet& q);
Quadruplet from_jsonl_line(std::string_view line);

void write_jsonl(std::ostream& out, const std::vector<Quadruplet>& quads);
std::vector<Quadruplet> read_jsonl(std::istream& in);
std::vector<Quadruplet> read_jsonl_file(const std::string& path);

// Writes {lang}.{train,valid,test}.jsonl into `dir`.
void write_split(const std::string& dir, const CorpusSplit& split);
CorpusSplit read_split(const std::string& dir, const std::string& lang);
// Languages with a {lang}.train.jsonl file in `dir`, sorted.
std::vector<std::string> split_languages(const std::string& dir);

// ---------------------------------------------------------------------------
// End-to-end corpus construction over one dump for several languages.

struct BuildOptions {
    std::vector<std::string> langs;
    SelectionRules rules;
    SplitRatios ratios;
    ValidRounding rounding = ValidRounding::floor_ratio;
};

struct BuildReport {
    DumpStats dump;
    std::map<std::string, CorpusSplit> splits;
    std::map<std::string, std::size_t> passing;    // posts passing the rules, per language
    std::map<std::string, std::size_t> extracted;  // quadruplets kept, per language
    std::size_t rejected_extractions = 0;
    std::size_t multi_language_posts = 0;  // emitted to more than one language corpus
};

BuildReport build_corpus(std::istream& xml, const BuildOptions& options);

}  // namespace titleforge
