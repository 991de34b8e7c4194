#include "titleforge/corpus.hpp"

#include <expat.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>
#include <sstream>

#include "titleforge/error.hpp"
#include "titleforge/html.hpp"
#include "titleforge/log.hpp"
#include "titleforge/text.hpp"

namespace titleforge {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Timestamp

namespace {

bool parse_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > s.size()) return false;
    int v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
        if (s[i] < '0' || s[i] > '9') return false;
        v = v * 10 + (s[i] - '0');
    }
    out = v;
    return true;
}

}  // namespace

Timestamp Timestamp::parse(std::string_view iso) {
    using namespace std::chrono;
    int y, mo, d, h, mi, s;
    bool ok = iso.size() >= 19 && parse_int(iso, 0, 4, y) && iso[4] == '-' && parse_int(iso, 5, 2, mo) &&
              iso[7] == '-' && parse_int(iso, 8, 2, d) && (iso[10] == 'T' || iso[10] == ' ') &&
              parse_int(iso, 11, 2, h) && iso[13] == ':' && parse_int(iso, 14, 2, mi) && iso[16] == ':' &&
              parse_int(iso, 17, 2, s);
    int millis = 0;
    std::size_t pos = 19;
    if (ok && pos < iso.size() && iso[pos] == '.') {
        ++pos;
        int digits = 0;
        while (pos < iso.size() && iso[pos] >= '0' && iso[pos] <= '9') {
            if (digits < 3) millis = millis * 10 + (iso[pos] - '0');
            ++digits;
            ++pos;
        }
        ok = digits > 0;
        for (; digits < 3 && ok; ++digits) millis *= 10;
    }
    if (ok && pos < iso.size() && iso[pos] == 'Z') ++pos;
    ok = ok && pos == iso.size();
    year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    ok = ok && ymd.ok() && h < 24 && mi < 60 && s < 61;
    if (!ok) {
        throw InvalidInput("invalid timestamp '" + std::string(iso) + "'");
    }
    auto tp = sys_days{ymd} + hours{h} + minutes{mi} + seconds{s} + milliseconds{millis};
    return Timestamp{duration_cast<milliseconds>(tp.time_since_epoch()).count()};
}

std::string Timestamp::to_string() const {
    using namespace std::chrono;
    sys_time<milliseconds> tp{milliseconds{millis}};
    auto day_point = floor<days>(tp);
    year_month_day ymd{day_point};
    hh_mm_ss tod{tp - day_point};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%03d", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(tod.hours().count()), static_cast<int>(tod.minutes().count()),
                  static_cast<int>(tod.seconds().count()), static_cast<int>(tod.subseconds().count()));
    return buf;
}

bool QuestionPost::has_tag(std::string_view tag) const {
    return std::find(tags.begin(), tags.end(), tag) != tags.end();
}

// ---------------------------------------------------------------------------
// Dump parsing

std::vector<std::string> parse_tags(std::string_view field) {
    std::vector<std::string> tags;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) tags.push_back(to_lower_ascii(current));
        current.clear();
    };
    for (char c : field) {
        if (c == '<' || c == '>' || c == '|' || c == ' ') {
            flush();
        } else {
            current += c;
        }
    }
    flush();
    return tags;
}

namespace {

std::optional<std::int64_t> to_int(const char* s) {
    if (!s || !*s) return std::nullopt;
    char* end = nullptr;
    errno = 0;
    long long v = std::strtoll(s, &end, 10);
    if (errno != 0 || *end != '\0') return std::nullopt;
    return v;
}

class DumpParser {
public:
    explicit DumpParser(DumpStats& stats) : stats_(stats), parser_(XML_ParserCreate("UTF-8")) {
        if (!parser_) throw Error("cannot allocate XML parser");
        XML_SetUserData(parser_, this);
        XML_SetStartElementHandler(parser_, &DumpParser::on_start);
    }
    ~DumpParser() { XML_ParserFree(parser_); }
    DumpParser(const DumpParser&) = delete;
    DumpParser& operator=(const DumpParser&) = delete;

    void run(std::istream& in, const PostSink& sink) {
        std::vector<char> buffer(1 << 16);
        for (;;) {
            in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
            auto got = static_cast<int>(in.gcount());
            bool final = got == 0 || in.eof();
            if (XML_Parse(parser_, buffer.data(), got, final) == XML_STATUS_ERROR) {
                if (failure_) std::rethrow_exception(failure_);
                throw ParseError(std::string("malformed XML: ") + XML_ErrorString(XML_GetErrorCode(parser_)),
                                 static_cast<std::uint64_t>(XML_GetCurrentByteIndex(parser_)));
            }
            for (auto& post : pending_) {
                sink(std::move(post));
            }
            pending_.clear();
            if (final) break;
        }
    }

private:
    static void XMLCALL on_start(void* user, const XML_Char* name, const XML_Char** attrs) {
        auto* self = static_cast<DumpParser*>(user);
        try {
            self->start_element(name, attrs);
        } catch (...) {
            self->failure_ = std::current_exception();
            XML_StopParser(self->parser_, XML_FALSE);
        }
    }

    void start_element(const XML_Char* name, const XML_Char** attrs) {
        if (std::string_view(name) != "row") return;
        ++stats_.rows;
        const char* id = nullptr;
        const char* type = nullptr;
        const char* accepted = nullptr;
        const char* score = nullptr;
        const char* body = nullptr;
        const char* title = nullptr;
        const char* tags = nullptr;
        const char* created = nullptr;
        for (std::size_t i = 0; attrs[i]; i += 2) {
            std::string_view key = attrs[i];
            const char* value = attrs[i + 1];
            if (key == "Id") id = value;
            else if (key == "PostTypeId") type = value;
            else if (key == "AcceptedAnswerId") accepted = value;
            else if (key == "Score") score = value;
            else if (key == "Body") body = value;
            else if (key == "Title") title = value;
            else if (key == "Tags") tags = value;
            else if (key == "CreationDate") created = value;
        }
        auto line = XML_GetCurrentLineNumber(parser_);
        auto reject = [&](const std::string& why) {
            ++stats_.rejected_rows;
            log::warn("row at line " + std::to_string(line) + " rejected: " + why);
        };
        if (!id || !created || !body) {
            reject(std::string("missing required attribute ") + (!id ? "Id" : !created ? "CreationDate" : "Body"));
            return;
        }
        auto post_id = to_int(id);
        if (!post_id) {
            reject("non-numeric Id");
            return;
        }
        if (!type || std::string_view(type) != "1") return;
        ++stats_.questions;

        QuestionPost post;
        post.id = *post_id;
        post.post_type = PostType::question;
        try {
            post.creation_date = Timestamp::parse(created);
        } catch (const InvalidInput& e) {
            reject(e.what());
            return;
        }
        post.score = to_int(score).value_or(0);
        post.accepted_answer_id = to_int(accepted);
        post.body_html = body;
        post.title = title ? title : "";
        post.tags = parse_tags(tags ? tags : "");
        pending_.push_back(std::move(post));
    }

    DumpStats& stats_;
    XML_Parser parser_;
    std::vector<QuestionPost> pending_;
    std::exception_ptr failure_;
};

}  // namespace

DumpStats for_each_question(std::istream& xml, const PostSink& sink) {
    DumpStats stats;
    DumpParser parser(stats);
    parser.run(xml, [&](QuestionPost&& post) {
        ++stats.yielded;
        sink(std::move(post));
    });
    return stats;
}

DumpStats parse_dump(std::istream& xml, std::string_view lang_tag, const PostSink& sink) {
    DumpStats stats;
    DumpParser parser(stats);
    parser.run(xml, [&](QuestionPost&& post) {
        if (!post.has_tag(lang_tag)) return;
        ++stats.yielded;
        sink(std::move(post));
    });
    return stats;
}

// ---------------------------------------------------------------------------
// Rules and extraction

bool passes_rules(const QuestionPost& post, const SelectionRules& rules) {
    return post.post_type == PostType::question && post.score >= rules.min_score &&
           post.accepted_answer_id.has_value() && html::has_code(post.body_html);
}

Quadruplet extract_quadruplet(const QuestionPost& post, std::string_view lang_tag) {
    auto parts = html::split_body(post.body_html);
    std::string code;
    for (const auto& block : parts.code_blocks) {
        if (!code.empty()) code += '\n';
        code += block;
    }
    if (code.empty()) {
        throw RejectedRecord("post " + std::to_string(post.id) + ": no code after extraction");
    }
    if (word_tokens(post.title).size() < 2) {
        throw RejectedRecord("post " + std::to_string(post.id) + ": title shorter than two tokens");
    }
    return Quadruplet{std::string(lang_tag), post.title,         std::move(parts.description),
                      std::move(code),       post.creation_date, post.id};
}

// ---------------------------------------------------------------------------
// Splitting

namespace {

std::size_t floor_share(double ratio, std::size_t n) {
    // Guard against products such as 0.1 * 30 landing a hair below an integer.
    return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

}  // namespace

SplitSizes split_sizes(std::size_t n, const SplitRatios& ratios, ValidRounding rounding) {
    SplitSizes sizes;
    sizes.train = floor_share(ratios.train, n);
    if (rounding == ValidRounding::floor_ratio) {
        sizes.valid = floor_share(ratios.valid, n);
    } else {
        sizes.valid = (n - sizes.train) / 2;
    }
    sizes.valid = std::min(sizes.valid, n - sizes.train);
    sizes.test = n - sizes.train - sizes.valid;
    return sizes;
}

CorpusSplit split_corpus(std::vector<Quadruplet> quads, const SplitRatios& ratios, ValidRounding rounding) {
    if (quads.size() < 3) {
        throw InvalidInput("insufficient data to split");
    }
    if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0 ||
        std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9) {
        throw InvalidInput("split ratios must be non-negative and sum to 1");
    }
    const std::string lang = quads.front().lang;
    for (const auto& q : quads) {
        if (q.lang != lang) {
            throw InvalidInput("split_corpus expects one language, got '" + lang + "' and '" + q.lang + "'");
        }
    }
    std::stable_sort(quads.begin(), quads.end(), [](const Quadruplet& a, const Quadruplet& b) {
        if (a.creation_date != b.creation_date) return a.creation_date < b.creation_date;
        return a.source_post_id < b.source_post_id;
    });
    auto sizes = split_sizes(quads.size(), ratios, rounding);
    CorpusSplit split;
    split.lang = lang;
    auto train_end = quads.begin() + static_cast<std::ptrdiff_t>(sizes.train);
    auto valid_end = train_end + static_cast<std::ptrdiff_t>(sizes.valid);
    split.train.assign(std::make_move_iterator(quads.begin()), std::make_move_iterator(train_end));
    split.valid.assign(std::make_move_iterator(train_end), std::make_move_iterator(valid_end));
    split.test.assign(std::make_move_iterator(valid_end), std::make_move_iterator(quads.end()));
    return split;
}

// ---------------------------------------------------------------------------
// Statistics

LengthStats length_stats(std::vector<std::size_t> lengths, std::size_t threshold) {
    LengthStats s;
    s.threshold = threshold;
    s.count = lengths.size();
    if (lengths.empty()) return s;
    std::sort(lengths.begin(), lengths.end());
    s.min = lengths.front();
    s.max = lengths.back();
    double total = 0.0;
    std::size_t below = 0;
    for (auto v : lengths) {
        total += static_cast<double>(v);
        if (v < threshold) ++below;
    }
    s.mean = total / static_cast<double>(lengths.size());
    s.fraction_below = static_cast<double>(below) / static_cast<double>(lengths.size());
    auto n = lengths.size();
    s.median = n % 2 ? static_cast<double>(lengths[n / 2])
                     : (static_cast<double>(lengths[n / 2 - 1]) + static_cast<double>(lengths[n / 2])) / 2.0;
    std::size_t best_count = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && lengths[j] == lengths[i]) ++j;
        if (j - i > best_count) {
            best_count = j - i;
            s.mode = lengths[i];
        }
        i = j;
    }
    return s;
}

CorpusStats corpus_stats(const CorpusSplit& split, const LengthFn& token_length) {
    if (split.size() == 0) {
        throw InvalidInput("corpus_stats: empty split");
    }
    std::vector<std::size_t> code, desc, title;
    for (const auto* part : {&split.train, &split.valid, &split.test}) {
        for (const auto& q : *part) {
            code.push_back(token_length(q.code));
            desc.push_back(token_length(q.description));
            title.push_back(token_length(q.title));
        }
    }
    return CorpusStats{length_stats(std::move(code), 256), length_stats(std::move(desc), 256),
                       length_stats(std::move(title), 16)};
}

// ---------------------------------------------------------------------------
// Serialization

std::string to_jsonl_line(const Quadruplet& q) {
    json j;
    j["lang"] = q.lang;
    j["title"] = q.title;
    j["description"] = q.description;
    j["code"] = q.code;
    j["creation_date"] = q.creation_date.to_string();
    j["source_post_id"] = q.source_post_id;
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

Quadruplet from_jsonl_line(std::string_view line) {
    try {
        auto j = json::parse(line);
        Quadruplet q;
        q.lang = j.at("lang").get<std::string>();
        q.title = j.at("title").get<std::string>();
        q.description = j.at("description").get<std::string>();
        q.code = j.at("code").get<std::string>();
        q.creation_date = Timestamp::parse(j.at("creation_date").get<std::string>());
        q.source_post_id = j.at("source_post_id").get<std::int64_t>();
        return q;
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("bad corpus record: ") + e.what());
    }
}

void write_jsonl(std::ostream& out, const std::vector<Quadruplet>& quads) {
    for (const auto& q : quads) {
        out << to_jsonl_line(q) << '\n';
    }
}

std::vector<Quadruplet> read_jsonl(std::istream& in) {
    std::vector<Quadruplet> quads;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        quads.push_back(from_jsonl_line(line));
    }
    return quads;
}

std::vector<Quadruplet> read_jsonl_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    return read_jsonl(in);
}

void write_split(const std::string& dir, const CorpusSplit& split) {
    std::filesystem::create_directories(dir);
    auto write_part = [&](const char* part, const std::vector<Quadruplet>& quads) {
        auto path = std::filesystem::path(dir) / (split.lang + "." + part + ".jsonl");
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + path.string());
        write_jsonl(out, quads);
        if (!out) throw Error("write failed for " + path.string());
    };
    write_part("train", split.train);
    write_part("valid", split.valid);
    write_part("test", split.test);
}

CorpusSplit read_split(const std::string& dir, const std::string& lang) {
    CorpusSplit split;
    split.lang = lang;
    auto path = [&](const char* part) {
        return (std::filesystem::path(dir) / (lang + "." + part + ".jsonl")).string();
    };
    split.train = read_jsonl_file(path("train"));
    split.valid = read_jsonl_file(path("valid"));
    split.test = read_jsonl_file(path("test"));
    return split;
}

std::vector<std::string> split_languages(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw Error("corpus directory not found: " + dir);
    const std::string suffix = ".train.jsonl";
    std::vector<std::string> langs;
    for (const auto& entry : fs::directory_iterator(dir)) {
        auto name = entry.path().filename().string();
        if (name.size() > suffix.size() && name.ends_with(suffix)) langs.push_back(name.substr(0, name.size() - suffix.size()));
    }
    std::sort(langs.begin(), langs.end());
    return langs;
}

// ---------------------------------------------------------------------------
// Build

BuildReport build_corpus(std::istream& xml, const BuildOptions& options) {
    if (options.langs.empty()) {
        throw InvalidInput("build_corpus: no languages requested");
    }
    BuildReport report;
    std::map<std::string, std::vector<Quadruplet>> per_lang;
    for (const auto& lang : options.langs) {
        per_lang[lang];
        report.passing[lang] = 0;
        report.extracted[lang] = 0;
    }
    report.dump = for_each_question(xml, [&](QuestionPost&& post) {
        std::size_t emitted = 0;
        for (const auto& lang : options.langs) {
            if (!post.has_tag(lang) || !passes_rules(post, options.rules)) continue;
            ++report.passing[lang];
            try {
                per_lang[lang].push_back(extract_quadruplet(post, lang));
                ++report.extracted[lang];
                ++emitted;
            } catch (const RejectedRecord& e) {
                ++report.rejected_extractions;
                log::warn(e.what());
            }
        }
        if (emitted > 1) {
            ++report.multi_language_posts;
            log::debug("post " + std::to_string(post.id) + " emitted to " + std::to_string(emitted) + " corpora");
        }
    });
    for (auto& [lang, quads] : per_lang) {
        if (quads.size() < 3) {
            log::warn("language '" + lang + "' has " + std::to_string(quads.size()) +
                      " records; not enough to split");
            continue;
        }
        report.splits.emplace(lang, split_corpus(std::move(quads), options.ratios, options.rounding));
    }
    if (report.multi_language_posts > 0) {
        log::info(std::to_string(report.multi_language_posts) + " posts were emitted to more than one language");
    }
    return report;
}

}  // namespace titleforge
