#include "titleforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <initializer_list>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "titleforge/stemmer.hpp"
#include "titleforge/text.hpp"

namespace titleforge {

EvalPair make_eval_pair(std::string_view candidate, std::string_view reference, std::int64_t doc_id) {
    return EvalPair{word_tokens(candidate), {word_tokens(reference)}, doc_id};
}

namespace {

// The reference scorer joins tokens with spaces and splits again on single spaces,
// so an empty side becomes one empty token.
Tokens space_split_view(const Tokens& tokens) { return tokens.empty() ? Tokens{""} : tokens; }

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace

double rouge_l(const EvalPair& pair) {
    constexpr double beta = 1.2;
    if (pair.references.empty()) throw std::invalid_argument("rouge_l: pair has no reference");
    auto cand = space_split_view(pair.candidate);
    double prec_max = 0, rec_max = 0;
    for (const auto& r : pair.references) {
        auto ref = space_split_view(r);
        auto lcs = static_cast<double>(lcs_length(ref, cand));
        prec_max = std::max(prec_max, lcs / static_cast<double>(cand.size()));
        rec_max = std::max(rec_max, lcs / static_cast<double>(ref.size()));
    }
    if (prec_max == 0 || rec_max == 0) return 0.0;
    return ((1 + beta * beta) * prec_max * rec_max) / (rec_max + beta * beta * prec_max);
}

double rouge_l(const std::vector<EvalPair>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("rouge_l: no pairs");
    double sum = 0;
    for (const auto& p : pairs) sum += rouge_l(p);
    return sum / static_cast<double>(pairs.size());
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts ngram_counts(const Tokens& words, int max_n) {
    NgramCounts counts;
    for (int k = 1; k <= max_n; ++k) {
        for (std::size_t i = 0; i + k <= words.size(); ++i) {
            counts[Tokens(words.begin() + static_cast<std::ptrdiff_t>(i),
                          words.begin() + static_cast<std::ptrdiff_t>(i) + k)] += 1;
        }
    }
    return counts;
}

}  // namespace

std::array<double, 4> bleu_all(const std::vector<EvalPair>& pairs, BleuSmoothing smoothing) {
    if (pairs.empty()) throw std::invalid_argument("bleu: no pairs");
    const bool toolkit = smoothing == BleuSmoothing::toolkit;
    const double tiny = toolkit ? 1e-15 : 0.0;
    const double small = toolkit ? 1e-9 : 0.0;
    std::array<long long, 4> guess{}, correct{};
    long long test_len = 0, ref_len = 0;
    for (const auto& p : pairs) {
        if (p.references.empty()) throw std::invalid_argument("bleu: pair has no reference");
        const auto len = static_cast<long long>(p.candidate.size());
        std::map<std::vector<std::string>, int> max_ref;
        long long best_len = -1;
        for (const auto& r : p.references) {
            auto rl = static_cast<long long>(r.size());
            // Closest reference length, ties to the shorter one.
            if (best_len < 0 || std::llabs(rl - len) < std::llabs(best_len - len) ||
                (std::llabs(rl - len) == std::llabs(best_len - len) && rl < best_len)) {
                best_len = rl;
            }
            for (const auto& [g, c] : ngram_counts(r, 4)) max_ref[g] = std::max(max_ref[g], c);
        }
        test_len += len;
        ref_len += best_len;
        for (int k = 0; k < 4; ++k) guess[k] += std::max(0LL, len - k);
        for (const auto& [g, c] : ngram_counts(p.candidate, 4)) {
            auto it = max_ref.find(g);
            if (it != max_ref.end()) correct[g.size() - 1] += std::min(it->second, c);
        }
    }
    std::array<double, 4> out{};
    double product = 1.0;
    for (int k = 0; k < 4; ++k) {
        double denom = static_cast<double>(guess[k]) + small;
        double ratio_k = denom == 0 ? 0.0 : (static_cast<double>(correct[k]) + tiny) / denom;
        product *= ratio_k;
        out[k] = std::pow(product, 1.0 / (k + 1));
    }
    double ratio = (static_cast<double>(test_len) + tiny) / (static_cast<double>(ref_len) + small);
    if (ratio < 1) {
        double bp = ratio == 0 ? 0.0 : std::exp(1 - 1 / ratio);
        for (auto& b : out) b *= bp;
    }
    return out;
}

double bleu(const std::vector<EvalPair>& pairs, int n, BleuSmoothing smoothing) {
    if (n < 1 || n > 4) throw std::invalid_argument("bleu: n must be in 1..4");
    return bleu_all(pairs, smoothing)[static_cast<std::size_t>(n - 1)];
}

// ---------------------------------------------------------------------------
// METEOR (exact + stem stages), following the 1.5 scorer.

namespace {

using U32 = std::u32string;

bool in_ranges(char32_t c, std::initializer_list<std::pair<char32_t, char32_t>> ranges) {
    for (auto [lo, hi] : ranges) {
        if (c >= lo && c <= hi) return true;
    }
    return false;
}

bool is_alpha(char32_t c) {
    return in_ranges(c, {{'A', 'Z'},
                         {'a', 'z'},
                         {0x160, 0x161},
                         {0x17D, 0x17E},
                         {0x178, 0x178},
                         {0xC0, 0xD6},
                         {0xD8, 0xF6},
                         {0xF8, 0x17E},
                         {0x400, 0x4FF},
                         {0x500, 0x527},
                         {0xA640, 0xA66E},
                         {0xA67E, 0xA697},
                         {0x1D00, 0x1D7F}});
}
bool is_digit(char32_t c) { return c >= '0' && c <= '9'; }
bool is_alnum(char32_t c) { return is_digit(c) || is_alpha(c); }
bool is_regex_space(char32_t c) { return c == ' ' || c == '\t' || c == '\n' || c == 0x0B || c == '\f' || c == '\r'; }
bool is_tokenizer_delim(char32_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f'; }

U32 replace_literal(const U32& s, const U32& from, const U32& to) {
    U32 out;
    std::size_t pos = 0;
    for (;;) {
        auto hit = s.find(from, pos);
        if (hit == U32::npos) break;
        out.append(s, pos, hit - pos);
        out += to;
        pos = hit + from.size();
    }
    out.append(s, pos, U32::npos);
    return out;
}

// Replaces every non-overlapping "<left><mid><right>" left to right.
template <typename Left, typename Right, typename Emit>
U32 replace_triples(const U32& s, Left left, char32_t mid, Right right, Emit emit) {
    U32 out;
    std::size_t i = 0;
    while (i < s.size()) {
        if (i + 2 < s.size() && s[i + 1] == mid && left(s[i]) && right(s[i + 2])) {
            out += emit(s[i], s[i + 2]);
            i += 3;
        } else {
            out.push_back(s[i]);
            ++i;
        }
    }
    return out;
}

U32 spaced(char32_t a, std::u32string_view middle, char32_t b) {
    U32 out(1, a);
    out += middle;
    out.push_back(b);
    return out;
}

const std::unordered_map<U32, int>& nonbreaking_prefixes() {
    static const std::unordered_map<U32, int> prefixes = [] {
        std::unordered_map<U32, int> m;
        for (char c = 'A'; c <= 'Z'; ++c) m[U32(1, static_cast<char32_t>(c))] = 1;
        for (const char32_t* p :
             {U"Adj",  U"Adm",  U"Adv",    U"Asst", U"Bart", U"Bldg", U"Brig", U"Bros", U"Capt", U"Cmdr", U"Col",
              U"Comdr", U"Con", U"Corp",   U"Cpl",  U"DR",   U"Dr",   U"Drs",  U"Ens",  U"Gen",  U"Gov",  U"Hon",
              U"Hr",   U"Hosp", U"Insp",   U"Lt",   U"MM",   U"MR",   U"MRS",  U"MS",   U"Maj",  U"Messrs",
              U"Mlle", U"Mme",  U"Mr",     U"Mrs",  U"Ms",   U"Msgr", U"Op",   U"Ord",  U"Pfc",  U"Ph",   U"Prof",
              U"Pvt",  U"Rep",  U"Reps",   U"Res",  U"Rev",  U"Rt",   U"Sen",  U"Sens", U"Sfc",  U"Sgt",  U"Sr",
              U"St",   U"Supt", U"Surg",   U"v",    U"vs",   U"i.e",  U"rev",  U"e.g",  U"Nos",  U"Nr"}) {
            m[p] = 1;
        }
        for (const char32_t* p : {U"No", U"Art", U"pp"}) m[p] = 2;
        return m;
    }();
    return prefixes;
}

U32 collapse_multi_dots(const U32& s) {
    // ".." and longer runs become " DOTMULTI" followed by the remaining dots.
    U32 out;
    std::size_t i = 0;
    while (i < s.size()) {
        if (s[i] == '.' && i + 1 < s.size() && s[i + 1] == '.') {
            std::size_t j = i + 1;
            while (j < s.size() && s[j] == '.') ++j;
            out += U" DOTMULTI";
            out.append(j - i - 1, U'.');
            i = j;
        } else {
            out.push_back(s[i]);
            ++i;
        }
    }
    while (out.find(U"DOTMULTI.") != U32::npos) {
        U32 next;
        std::size_t pos = 0;
        const U32 key = U"DOTMULTI.";
        for (;;) {
            auto hit = out.find(key, pos);
            if (hit == U32::npos || hit + key.size() >= out.size()) break;
            char32_t after = out[hit + key.size()];
            if (after == '.') {
                next.append(out, pos, hit + 1 - pos);
                pos = hit + 1;
                continue;
            }
            next.append(out, pos, hit - pos);
            next += U"DOTDOTMULTI ";
            next.push_back(after);
            pos = hit + key.size() + 1;
        }
        next.append(out, pos, U32::npos);
        out = replace_literal(next, U"DOTMULTI.", U"DOTDOTMULTI");
    }
    return out;
}

std::vector<U32> tokenize(const U32& s) {
    std::vector<U32> out;
    U32 cur;
    for (char32_t c : s) {
        if (is_tokenizer_delim(c)) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

U32 normalize_u32(const U32& line) {
    U32 s = U" " + line + U" ";

    U32 sep;
    for (char32_t c : s) {
        bool keep = is_alnum(c) || is_regex_space(c) || c == '.' || c == '\'' || c == '`' || c == ',' || c == '-' ||
                    c == 0x2018 || c == 0x2019;
        if (keep) {
            sep.push_back(c);
        } else {
            sep.push_back(' ');
            sep.push_back(c);
            sep.push_back(' ');
        }
    }
    s = collapse_multi_dots(sep);

    auto not_digit = [](char32_t c) { return !is_digit(c); };
    auto comma = [](char32_t a, char32_t b) { return spaced(a, U" , ", b); };
    s = replace_triples(s, not_digit, ',', not_digit, comma);
    s = replace_triples(s, is_digit, ',', not_digit, comma);
    s = replace_triples(s, not_digit, ',', is_digit, comma);

    for (auto& c : s) {
        if (c == '`' || c == 0x2018 || c == 0x2019) c = '\'';
    }
    U32 quoted;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == 0x201C || s[i] == 0x201D) {
            quoted += U" \" ";
        } else if (s[i] == '\'' && i + 1 < s.size() && s[i + 1] == '\'') {
            quoted += U" \" ";
            ++i;
        } else {
            quoted.push_back(s[i]);
        }
    }
    s = replace_literal(quoted, U"–", U"-");
    s = replace_literal(s, U"--", U"-");
    s = replace_triples(
        s, [](char32_t c) { return is_alnum(c) || c == '.'; }, '-', is_alnum,
        [](char32_t a, char32_t b) { return spaced(a, U" ", b); });

    auto not_alpha = [](char32_t c) { return !is_alpha(c); };
    auto apart = [](char32_t a, char32_t b) { return spaced(a, U" ' ", b); };
    auto attach = [](char32_t a, char32_t b) { return spaced(a, U" '", b); };
    s = replace_triples(s, not_alpha, '\'', not_alpha, apart);
    s = replace_triples(s, [](char32_t c) { return !is_alpha(c) && !is_digit(c); }, '\'', is_alpha, apart);
    s = replace_triples(s, is_alpha, '\'', not_alpha, apart);
    s = replace_triples(s, is_alpha, '\'', is_alpha, attach);
    s = replace_triples(s, is_digit, '\'', [](char32_t c) { return c == 's'; }, attach);

    // Trailing periods are split off unless the word is a known abbreviation.
    auto words = tokenize(s);
    const auto& nbp = nonbreaking_prefixes();
    U32 joined;
    for (std::size_t i = 0; i < words.size(); ++i) {
        const U32& w = words[i];
        if (w.size() > 1 && w.back() == '.') {
            U32 pre = w.substr(0, w.size() - 1);
            auto it = nbp.find(pre);
            int kind = it == nbp.end() ? 0 : it->second;
            bool has_next = i + 1 < words.size();
            if (pre.find('.') != U32::npos && std::any_of(pre.begin(), pre.end(), is_alpha)) {
                joined += replace_literal(w, U".", U"");
            } else if (kind == 1 || (has_next && words[i + 1][0] >= 'a' && words[i + 1][0] <= 'z')) {
                joined += w;
            } else if (kind == 2 && has_next && is_digit(words[i + 1][0])) {
                joined += w;
            } else {
                joined += pre + U" .";
            }
        } else {
            joined += w;
        }
        joined += U" ";
    }
    s = joined;
    while (s.find(U"DOTDOTMULTI") != U32::npos) s = replace_literal(s, U"DOTDOTMULTI", U"DOTMULTI.");
    s = replace_literal(s, U"DOTMULTI", U".");

    U32 white;
    for (char32_t c : s) {
        bool ws = c == ' ' || (c >= 0x2000 && c <= 0x200A) || c == 0x202F || c == 0x205F || c == 0x3000 || c == 0xA0;
        if (ws) {
            if (white.empty() || white.back() != ' ') white.push_back(' ');
        } else {
            white.push_back(c);
        }
    }
    std::size_t b = 0, e = white.size();
    while (b < e && white[b] <= ' ') ++b;
    while (e > b && white[e - 1] <= ' ') --e;
    return white.substr(b, e - b);
}

const std::unordered_set<std::string>& function_words() {
    static const std::unordered_set<std::string> words = {
        "the",  ",",     ".",     "to",    "of",   "and",   "a",     "in",    "that",  "for",   "\"",
        "is",   "on",    "'s",    "it",    "with",  "was",  "as",    "said",  "at",    "he",    "by",    "be",
        "from", "have",  "has",   "are",   "his",   "but",  "an",    "this",  "not",   "i",     "will",  "’",
        "they", ")",     "-rrb-", "(",     "-lrb-", "who",  "their", "had",   "we",    "which", "were",  "been",
        "more", "or",    "s",     "its",   "would", "about", "new",  "one",   "after", "you",   ":",     "also",
        "up",   "when",  "there", "than",  "$",     "all",  "out",   "her",   "people", "she",  "year",  "two",
        "-",    "can",   "if",    "last",  "first", "“", "over", "other", "”", "into", "some",  "what",
        "so",   "--",    "no",    "time",  "years", "could", "?",    "'t",    "—", "'"};
    return words;
}

struct Match {
    int module;
    int start;        // reference position
    int match_start;  // candidate position
};

struct Partial {
    std::vector<int> matches;  // per reference position, index into the match list or -1
    int match_count = 0;
    int matches1 = 0;
    int matches2 = 0;
    int all1 = 0;
    int all2 = 0;
    int chunks = 0;
    int idx = 0;
    int last_end = -1;
    int distance = 0;
    std::vector<char> used1;
    std::vector<char> used2;
};

// Ordering of partial alignments: more weighted matches first, then fewer chunks, then less distance.
bool partial_before(const Partial& a, const Partial& b) {
    int d = (b.matches1 + b.matches2) - (a.matches1 + a.matches2);
    if (d != 0) return d < 0;
    if (a.chunks != b.chunks) return a.chunks < b.chunks;
    return a.distance < b.distance;
}

void accumulate(Partial& n, const Match& m, const std::array<double, 2>& weights) {
    n.match_count += 1;
    n.matches1 = static_cast<int>(n.matches1 + 1.0 * weights[static_cast<std::size_t>(m.module)]);
    n.matches2 = static_cast<int>(n.matches2 + 1.0 * weights[static_cast<std::size_t>(m.module)]);
    n.all1 += 1;
    n.all2 += 1;
    if (n.last_end != -1 && m.match_start != n.last_end) n.chunks += 1;
    n.idx = m.start + 1;
    n.last_end = m.match_start + 1;
}

Partial resolve(const std::vector<std::vector<int>>& stage, const std::vector<Match>& all, Partial start,
                const std::array<double, 2>& weights, int beam) {
    std::vector<Partial> cur{std::move(start)};
    const std::size_t size = stage.size();
    for (std::size_t i = 0; i <= size; ++i) {
        std::vector<Partial> prev = std::move(cur);
        cur.clear();
        std::stable_sort(prev.begin(), prev.end(), partial_before);
        for (std::size_t t = 0; t < static_cast<std::size_t>(beam) && t < prev.size(); ++t) {
            Partial& p = prev[t];
            if (i == size) {
                if (p.last_end != -1) p.chunks += 1;
                cur.push_back(p);
            } else if (p.used2[i]) {
                if (static_cast<int>(i) < p.idx) {
                    cur.push_back(p);
                } else if (p.matches[static_cast<std::size_t>(p.idx)] >= 0) {
                    const Match& m = all[static_cast<std::size_t>(p.matches[static_cast<std::size_t>(p.idx)])];
                    accumulate(p, m, weights);
                    p.distance += std::abs(m.start - m.match_start);
                    cur.push_back(p);
                }
            } else {
                for (int mi : stage[i]) {
                    const Match& m = all[static_cast<std::size_t>(mi)];
                    if (p.used2[static_cast<std::size_t>(m.start)] || p.used1[static_cast<std::size_t>(m.match_start)]) {
                        continue;
                    }
                    Partial n = p;
                    n.used2[static_cast<std::size_t>(m.start)] = 1;
                    n.used1[static_cast<std::size_t>(m.match_start)] = 1;
                    n.matches[i] = mi;
                    accumulate(n, m, weights);
                    // The 1.5 scorer charges the distance of a new match to the parent alignment.
                    p.distance += std::abs(m.start - m.match_start);
                    cur.push_back(std::move(n));
                }
                if (p.last_end != -1) {
                    p.chunks += 1;
                    p.last_end = -1;
                }
                p.idx += 1;
                cur.push_back(p);
            }
        }
        if (cur.empty()) cur.push_back(prev.front());
    }
    std::stable_sort(cur.begin(), cur.end(), partial_before);
    return cur.front();
}

std::vector<std::string> split_words(const std::string& line) {
    std::vector<std::string> out;
    for (const auto& w : tokenize(utf8_to_u32(line))) out.push_back(u32_to_utf8(w));
    return out;
}

}  // namespace

bool MeteorStats::perfect() const {
    double test_total = test_content[0] + test_function[0] + test_content[1] + test_function[1];
    double ref_total = reference_content[0] + reference_function[0] + reference_content[1] + reference_function[1];
    return test_total == test_length && ref_total == reference_length && chunks == 1;
}

void MeteorStats::add(const MeteorStats& o) {
    test_length += o.test_length;
    reference_length += o.reference_length;
    test_function_words += o.test_function_words;
    reference_function_words += o.reference_function_words;
    for (std::size_t k = 0; k < 2; ++k) {
        test_content[k] += o.test_content[k];
        reference_content[k] += o.reference_content[k];
        test_function[k] += o.test_function[k];
        reference_function[k] += o.reference_function[k];
    }
    if (!o.perfect()) chunks += o.chunks;
    test_word_matches += o.test_word_matches;
    reference_word_matches += o.reference_word_matches;
}

std::string meteor_normalize(std::string_view line) {
    return u32_to_utf8(unicode_lower(normalize_u32(utf8_to_u32(line))));
}

MeteorStats meteor_stats(const Tokens& candidate, const Tokens& reference, const MeteorParams& params) {
    auto words1 = split_words(meteor_normalize(join(candidate, " ")));
    auto words2 = split_words(meteor_normalize(join(reference, " ")));
    const std::size_t n1 = words1.size(), n2 = words2.size();

    std::vector<std::int32_t> h1(n1), h2(n2);
    for (std::size_t i = 0; i < n1; ++i) h1[i] = java_string_hash(words1[i]);
    for (std::size_t j = 0; j < n2; ++j) h2[j] = java_string_hash(words2[j]);
    const bool identical = n1 == n2 && h1 == h2;

    std::vector<Match> all;
    std::vector<std::vector<int>> stage(n2);
    std::vector<int> cov1(n1, 0), cov2(n2, 0);
    auto add_match = [&](int module, std::size_t j, std::size_t i) {
        stage[j].push_back(static_cast<int>(all.size()));
        all.push_back(Match{module, static_cast<int>(j), static_cast<int>(i)});
        ++cov1[i];
        ++cov2[j];
    };
    for (std::size_t j = 0; j < n2; ++j) {
        for (std::size_t i = 0; i < n1; ++i) {
            if (h1[i] == h2[j]) add_match(0, j, i);
        }
    }
    if (!identical) {
        std::vector<std::int32_t> s1(n1), s2(n2);
        for (std::size_t i = 0; i < n1; ++i) s1[i] = java_string_hash(english_stem(words1[i]));
        for (std::size_t j = 0; j < n2; ++j) s2[j] = java_string_hash(english_stem(words2[j]));
        for (std::size_t j = 0; j < n2; ++j) {
            for (std::size_t i = 0; i < n1; ++i) {
                if (s1[i] == s2[j] && h1[i] != h2[j]) add_match(1, j, i);
            }
        }
    }

    Partial start;
    start.matches.assign(n2, -1);
    start.used1.assign(n1, 0);
    start.used2.assign(n2, 0);
    // A reference word with a single candidate match that competes with nothing is fixed up front.
    for (std::size_t j = 0; j < n2; ++j) {
        if (stage[j].size() != 1) continue;
        const Match& m = all[static_cast<std::size_t>(stage[j][0])];
        if (cov2[j] != 1 || cov1[static_cast<std::size_t>(m.match_start)] != 1) continue;
        start.matches[j] = stage[j][0];
        start.used2[j] = 1;
        start.used1[static_cast<std::size_t>(m.match_start)] = 1;
    }

    const std::array<double, 2> weights{params.exact_weight, params.stem_weight};
    Partial best = resolve(stage, all, std::move(start), weights, params.beam_size);

    const auto& fw = function_words();
    std::vector<char> f1(n1), f2(n2);
    MeteorStats st;
    st.test_length = static_cast<double>(n1);
    st.reference_length = static_cast<double>(n2);
    for (std::size_t i = 0; i < n1; ++i) {
        f1[i] = fw.count(u32_to_utf8(unicode_lower(utf8_to_u32(words1[i])))) ? 1 : 0;
        st.test_function_words += f1[i];
    }
    for (std::size_t j = 0; j < n2; ++j) {
        f2[j] = fw.count(u32_to_utf8(unicode_lower(utf8_to_u32(words2[j])))) ? 1 : 0;
        st.reference_function_words += f2[j];
    }

    int last_end = -1;
    std::size_t j = 0;
    while (j < n2) {
        int mi = best.matches[j];
        if (mi < 0) {
            if (last_end != -1) {
                st.chunks += 1;
                last_end = -1;
            }
            ++j;
            continue;
        }
        const Match& m = all[static_cast<std::size_t>(mi)];
        auto mod = static_cast<std::size_t>(m.module);
        (f1[static_cast<std::size_t>(m.match_start)] ? st.test_function : st.test_content)[mod] += 1;
        (f2[static_cast<std::size_t>(m.start)] ? st.reference_function : st.reference_content)[mod] += 1;
        if (last_end != -1 && m.match_start != last_end) st.chunks += 1;
        j = static_cast<std::size_t>(m.start) + 1;
        last_end = m.match_start + 1;
    }
    if (last_end != -1) st.chunks += 1;
    for (std::size_t k = 0; k < 2; ++k) {
        st.test_word_matches += st.test_content[k] + st.test_function[k];
        st.reference_word_matches += st.reference_content[k] + st.reference_function[k];
    }
    return st;
}

double meteor_score(const MeteorStats& s, const MeteorParams& params) {
    const std::array<double, 2> weights{params.exact_weight, params.stem_weight};
    const double d = params.delta;
    double test_len = d * (s.test_length - s.test_function_words) + (1 - d) * s.test_function_words;
    double ref_len = d * (s.reference_length - s.reference_function_words) + (1 - d) * s.reference_function_words;
    double test_matches = 0, ref_matches = 0;
    for (std::size_t k = 0; k < 2; ++k) test_matches += s.test_content[k] * weights[k] * d;
    for (std::size_t k = 0; k < 2; ++k) ref_matches += s.reference_content[k] * weights[k] * d;
    for (std::size_t k = 0; k < 2; ++k) test_matches += s.test_function[k] * weights[k] * (1 - d);
    for (std::size_t k = 0; k < 2; ++k) ref_matches += s.reference_function[k] * weights[k] * (1 - d);
    double precision = test_matches / test_len;
    double recall = ref_matches / ref_len;
    double fmean = 1.0 / ((1 - params.alpha) / precision + params.alpha / recall);
    double frag = s.perfect() ? 0.0 : s.chunks / ((s.test_word_matches + s.reference_word_matches) / 2.0);
    double penalty = params.gamma * std::pow(frag, params.beta);
    double score = fmean * (1 - penalty);
    if (std::isnan(score)) return 0.0;
    return std::max(score, 0.0);
}

std::vector<double> meteor_segments(const std::vector<EvalPair>& pairs, const MeteorParams& params) {
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        if (p.references.empty()) throw std::invalid_argument("meteor: pair has no reference");
        out.push_back(meteor_score(meteor_stats(p.candidate, p.references.front(), params), params));
    }
    return out;
}

double meteor(const std::vector<EvalPair>& pairs, const MeteorParams& params) {
    if (pairs.empty()) throw std::invalid_argument("meteor: no pairs");
    MeteorStats total;
    for (const auto& p : pairs) {
        if (p.references.empty()) throw std::invalid_argument("meteor: pair has no reference");
        total.add(meteor_stats(p.candidate, p.references.front(), params));
    }
    return meteor_score(total, params);
}

// ---------------------------------------------------------------------------
// CIDEr

namespace {

struct TfIdf {
    std::array<std::map<Tokens, double>, 4> vec;
    std::array<double, 4> norm{};
    double length = 0;
};

TfIdf to_tfidf(const NgramCounts& counts, const std::map<Tokens, double>& df, double log_docs) {
    TfIdf out;
    for (const auto& [g, tf] : counts) {
        auto it = df.find(g);
        double d = std::log(std::max(1.0, it == df.end() ? 0.0 : it->second));
        std::size_t n = g.size() - 1;
        double v = tf * (log_docs - d);
        out.vec[n][g] = v;
        out.norm[n] += v * v;
        // The reference scorer measures length in bigrams.
        if (n == 1) out.length += tf;
    }
    for (auto& x : out.norm) x = std::sqrt(x);
    return out;
}

}  // namespace

std::vector<double> cider_segments(const std::vector<EvalPair>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("cider: corpus is empty");
    constexpr double sigma = 6.0;
    std::map<Tokens, double> df;
    std::vector<std::vector<NgramCounts>> refs;
    refs.reserve(pairs.size());
    for (const auto& p : pairs) {
        if (p.references.empty()) throw std::invalid_argument("cider: pair has no reference");
        std::vector<NgramCounts> rc;
        std::set<Tokens> seen;
        for (const auto& r : p.references) {
            rc.push_back(ngram_counts(r, 4));
            for (const auto& [g, c] : rc.back()) seen.insert(g);
        }
        for (const auto& g : seen) df[g] += 1;
        refs.push_back(std::move(rc));
    }
    const double log_docs = std::log(static_cast<double>(pairs.size()));
    std::vector<double> scores;
    scores.reserve(pairs.size());
    for (std::size_t d = 0; d < pairs.size(); ++d) {
        auto hyp = to_tfidf(ngram_counts(pairs[d].candidate, 4), df, log_docs);
        std::array<double, 4> total{};
        for (const auto& rc : refs[d]) {
            auto ref = to_tfidf(rc, df, log_docs);
            double delta = hyp.length - ref.length;
            for (std::size_t n = 0; n < 4; ++n) {
                double val = 0;
                for (const auto& [g, v] : hyp.vec[n]) {
                    auto it = ref.vec[n].find(g);
                    double rv = it == ref.vec[n].end() ? 0.0 : it->second;
                    val += std::min(v, rv) * rv;
                }
                if (hyp.norm[n] != 0 && ref.norm[n] != 0) val /= hyp.norm[n] * ref.norm[n];
                val *= std::exp(-(delta * delta) / (2 * sigma * sigma));
                total[n] += val;
            }
        }
        double mean = (total[0] + total[1] + total[2] + total[3]) / 4.0;
        scores.push_back(mean / static_cast<double>(refs[d].size()) * 10.0);
    }
    return scores;
}

double cider(const std::vector<EvalPair>& pairs) {
    auto s = cider_segments(pairs);
    double sum = 0;
    for (double x : s) sum += x;
    return sum / static_cast<double>(s.size());
}

Scores score_all(const std::vector<EvalPair>& pairs) {
    Scores s;
    s.pairs = pairs.size();
    if (pairs.empty()) return s;
    s.rouge_l = rouge_l(pairs);
    s.meteor = meteor(pairs);
    s.bleu = bleu_all(pairs);
    s.cider = cider(pairs);
    return s;
}

void MetricReport::add(const std::string& lang, const Scores& fractions) { languages[lang] = fractions; }

nlohmann::json MetricReport::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [lang, s] : languages) {
        j[lang] = {
            {"rouge_l", 100.0 * s.rouge_l}, {"meteor", 100.0 * s.meteor}, {"bleu_1", 100.0 * s.bleu[0]},
            {"bleu_2", 100.0 * s.bleu[1]},  {"bleu_3", 100.0 * s.bleu[2]}, {"bleu_4", 100.0 * s.bleu[3]},
            {"cider", s.cider},             {"pairs", s.pairs},
        };
    }
    return j;
}

std::string MetricReport::to_table() const {
    std::ostringstream out;
    out << std::left << std::setw(10) << "lang" << std::right;
    for (const char* h : {"ROUGE-L", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "METEOR", "CIDEr"}) {
        out << std::setw(9) << h;
    }
    out << '\n' << std::fixed;
    for (const auto& [lang, s] : languages) {
        out << std::left << std::setw(10) << lang << std::right << std::setprecision(2);
        for (double v : {s.rouge_l, s.bleu[0], s.bleu[1], s.bleu[2], s.bleu[3], s.meteor}) {
            out << std::setw(9) << 100.0 * v;
        }
        out << std::setw(9) << s.cider << '\n';
    }
    return out.str();
}

nlohmann::json metrics_params() {
    MeteorParams m;
    return {
        {"tokenizer", "lowercase; ASCII punctuation split into tokens; split on whitespace"},
        {"rouge_l", {{"beta", 1.2}, {"multi_reference", "max precision and max recall"}, {"aggregate", "mean"}}},
        {"bleu",
         {{"orders", {1, 2, 3, 4}},
          {"level", "corpus"},
          {"reference_length", "closest"},
          {"smoothing", "toolkit"},
          {"tiny", 1e-15},
          {"small", 1e-9}}},
        {"meteor",
         {{"version", "1.5"},
          {"language", "en"},
          {"normalize", true},
          {"lowercase", true},
          {"keep_punctuation", true},
          {"modules", {"exact", "stem"}},
          {"weights", {m.exact_weight, m.stem_weight}},
          {"alpha", m.alpha},
          {"beta", m.beta},
          {"gamma", m.gamma},
          {"delta", m.delta},
          {"beam_size", m.beam_size},
          {"aggregate", "summed statistics"}}},
        {"cider",
         {{"variant", "CIDEr-D"},
          {"n", 4},
          {"sigma", 6.0},
          {"clipping", true},
          {"scale", 10.0},
          {"idf", "log(corpus size / reference document frequency)"}}},
    };
}

}  // namespace titleforge
