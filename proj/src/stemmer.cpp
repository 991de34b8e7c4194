#include "titleforge/stemmer.hpp"

#include <array>
#include <utility>

#include "titleforge/text.hpp"

namespace titleforge {
namespace {

using Word = std::u32string;

bool is_v(char32_t c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y'; }
bool is_v_wxy(char32_t c) { return is_v(c) || c == 'w' || c == 'x' || c == 'Y'; }
bool is_valid_li(char32_t c) { return Word(U"cdeghkmnrt").find(c) != Word::npos; }

bool ends_with(const Word& w, std::u32string_view s) {
    return w.size() >= s.size() && std::u32string_view(w).substr(w.size() - s.size()) == s;
}

// Longest entry of `list` that is a suffix of w.
template <std::size_t N>
std::u32string_view longest_suffix(const Word& w, const std::array<std::u32string_view, N>& list) {
    std::u32string_view best;
    for (auto s : list) {
        if (s.size() > best.size() && ends_with(w, s)) best = s;
    }
    return best;
}

// Region test for the suffix starting at `pos`, looking backwards from it.
bool short_syllable_before(const Word& w, std::size_t end) {
    if (end >= 3 && !is_v_wxy(w[end - 1]) && is_v(w[end - 2]) && !is_v(w[end - 3])) return true;
    return end == 2 && !is_v(w[1]) && is_v(w[0]);
}

void replace_suffix(Word& w, std::size_t len, std::u32string_view with) {
    w.replace(w.size() - len, len, with);
}

struct Regions {
    std::size_t p1;
    std::size_t p2;
};

// Position after the first non-vowel that follows a vowel, searching from `from`.
std::size_t region_start(const Word& w, std::size_t from) {
    std::size_t i = from;
    while (i < w.size() && !is_v(w[i])) ++i;
    if (i == w.size()) return w.size();
    while (i < w.size() && is_v(w[i])) ++i;
    if (i == w.size()) return w.size();
    return i + 1;
}

Regions mark_regions(const Word& w) {
    Regions r{w.size(), w.size()};
    std::size_t p1 = Word::npos;
    for (std::u32string_view prefix : {U"gener", U"commun", U"arsen"}) {
        if (w.size() >= prefix.size() && std::u32string_view(w).substr(0, prefix.size()) == prefix) {
            p1 = prefix.size();
        }
    }
    if (p1 == Word::npos) {
        p1 = region_start(w, 0);
        if (p1 == w.size()) return r;
    }
    r.p1 = p1;
    r.p2 = region_start(w, p1);
    return r;
}

bool has_vowel(const Word& w, std::size_t end) {
    for (std::size_t i = 0; i < end; ++i) {
        if (is_v(w[i])) return true;
    }
    return false;
}

void step_1a(Word& w) {
    static constexpr std::array<std::u32string_view, 3> apostrophes{U"'", U"'s", U"'s'"};
    if (auto s = longest_suffix(w, apostrophes); !s.empty()) replace_suffix(w, s.size(), U"");

    static constexpr std::array<std::u32string_view, 6> suffixes{U"sses", U"ied", U"ies", U"s", U"us", U"ss"};
    auto s = longest_suffix(w, suffixes);
    if (s == U"sses") {
        replace_suffix(w, 4, U"ss");
    } else if (s == U"ied" || s == U"ies") {
        replace_suffix(w, 3, w.size() - 3 >= 2 ? U"i" : U"ie");
    } else if (s == U"s") {
        // Skip the letter before the s, then look for a vowel further left.
        std::size_t before = w.size() - 1;
        if (before >= 1 && has_vowel(w, before - 1)) w.pop_back();
    }
}

bool exception2(const Word& w) {
    for (std::u32string_view e : {U"inning", U"outing", U"canning", U"herring", U"earring", U"proceed", U"exceed",
                                  U"succeed"}) {
        if (w == e) return true;
    }
    return false;
}

void step_1b(Word& w, const Regions& r) {
    static constexpr std::array<std::u32string_view, 6> suffixes{U"eed", U"eedly", U"ed", U"edly", U"ing", U"ingly"};
    auto s = longest_suffix(w, suffixes);
    if (s.empty()) return;
    std::size_t start = w.size() - s.size();
    if (s == U"eed" || s == U"eedly") {
        if (start >= r.p1) replace_suffix(w, s.size(), U"ee");
        return;
    }
    if (!has_vowel(w, start)) return;
    w.erase(start);
    static constexpr std::array<std::u32string_view, 12> tails{U"at", U"bl", U"iz", U"bb", U"dd", U"ff",
                                                               U"gg", U"mm", U"nn", U"pp", U"rr", U"tt"};
    auto t = longest_suffix(w, tails);
    if (t == U"at" || t == U"bl" || t == U"iz") {
        w.push_back('e');
    } else if (!t.empty()) {
        w.pop_back();
    } else if (w.size() == r.p1 && short_syllable_before(w, w.size())) {
        w.push_back('e');
    }
}

void step_1c(Word& w) {
    auto n = w.size();
    if (n >= 3 && (w[n - 1] == 'y' || w[n - 1] == 'Y') && !is_v(w[n - 2])) w[n - 1] = 'i';
}

void step_2(Word& w, const Regions& r) {
    static constexpr std::array<std::u32string_view, 25> suffixes{
        U"tional", U"enci",  U"anci",  U"abli",    U"entli", U"izer",    U"ization", U"ational", U"ation",
        U"ator",   U"alism", U"aliti", U"alli",    U"fulness", U"ousli", U"ousness", U"iveness", U"iviti",
        U"biliti", U"bli",   U"ogi",   U"fulli",   U"lessli", U"li",     U"eli"};
    static const std::array<std::pair<std::u32string_view, std::u32string_view>, 23> map{{
        {U"tional", U"tion"}, {U"enci", U"ence"},   {U"anci", U"ance"},   {U"abli", U"able"},
        {U"entli", U"ent"},   {U"izer", U"ize"},    {U"ization", U"ize"}, {U"ational", U"ate"},
        {U"ation", U"ate"},   {U"ator", U"ate"},    {U"alism", U"al"},    {U"aliti", U"al"},
        {U"alli", U"al"},     {U"fulness", U"ful"}, {U"ousli", U"ous"},   {U"ousness", U"ous"},
        {U"iveness", U"ive"}, {U"iviti", U"ive"},   {U"biliti", U"ble"},  {U"bli", U"ble"},
        {U"ogi", U"og"},      {U"fulli", U"ful"},   {U"lessli", U"less"},
    }};
    auto s = longest_suffix(w, suffixes);
    if (s.empty() || s == U"eli") {
        // "eli" is not a Step 2 suffix; it only stops "li" from matching words like "deli".
        if (s == U"eli") s = U"li";
        else return;
    }
    std::size_t start = w.size() - s.size();
    if (start < r.p1) return;
    if (s == U"li") {
        if (start >= 1 && is_valid_li(w[start - 1])) w.erase(start);
        return;
    }
    if (s == U"ogi" && !(start >= 1 && w[start - 1] == 'l')) return;
    for (auto [from, to] : map) {
        if (from == s) {
            replace_suffix(w, s.size(), to);
            return;
        }
    }
}

void step_3(Word& w, const Regions& r) {
    static constexpr std::array<std::u32string_view, 9> suffixes{U"tional", U"ational", U"alize", U"icate", U"iciti",
                                                                 U"ical",   U"ful",     U"ness",  U"ative"};
    auto s = longest_suffix(w, suffixes);
    if (s.empty()) return;
    std::size_t start = w.size() - s.size();
    if (start < r.p1) return;
    if (s == U"tional") replace_suffix(w, s.size(), U"tion");
    else if (s == U"ational") replace_suffix(w, s.size(), U"ate");
    else if (s == U"alize") replace_suffix(w, s.size(), U"al");
    else if (s == U"icate" || s == U"iciti" || s == U"ical") replace_suffix(w, s.size(), U"ic");
    else if (s == U"ful" || s == U"ness") w.erase(start);
    else if (s == U"ative" && start >= r.p2) w.erase(start);
}

void step_4(Word& w, const Regions& r) {
    static constexpr std::array<std::u32string_view, 18> suffixes{
        U"al",  U"ance", U"ence", U"er",  U"ic",  U"able", U"ible", U"ant", U"ement",
        U"ment", U"ent", U"ism",  U"ate", U"iti", U"ous",  U"ive",  U"ize", U"ion"};
    auto s = longest_suffix(w, suffixes);
    if (s.empty()) return;
    std::size_t start = w.size() - s.size();
    if (start < r.p2) return;
    if (s == U"ion") {
        if (start >= 1 && (w[start - 1] == 's' || w[start - 1] == 't')) w.erase(start);
        return;
    }
    w.erase(start);
}

void step_5(Word& w, const Regions& r) {
    if (w.empty()) return;
    std::size_t start = w.size() - 1;
    if (w.back() == 'e') {
        if (start >= r.p2 || (start >= r.p1 && !short_syllable_before(w, start))) w.pop_back();
    } else if (w.back() == 'l') {
        if (start >= r.p2 && start >= 1 && w[start - 1] == 'l') w.pop_back();
    }
}

}  // namespace

std::string english_stem(std::string_view word) {
    Word w = utf8_to_u32(word);

    static const std::array<std::pair<std::u32string_view, std::u32string_view>, 18> exceptions{{
        {U"skis", U"ski"},     {U"skies", U"sky"},   {U"dying", U"die"},   {U"lying", U"lie"},
        {U"tying", U"tie"},    {U"idly", U"idl"},    {U"gently", U"gentl"}, {U"ugly", U"ugli"},
        {U"early", U"earli"},  {U"only", U"onli"},   {U"singly", U"singl"}, {U"sky", U"sky"},
        {U"news", U"news"},    {U"howe", U"howe"},   {U"atlas", U"atlas"}, {U"cosmos", U"cosmos"},
        {U"bias", U"bias"},    {U"andes", U"andes"},
    }};
    for (auto [from, to] : exceptions) {
        if (w == from) return u32_to_utf8(to);
    }
    if (w.size() < 3) return std::string(word);

    // Prelude.
    if (w[0] == '\'') w.erase(0, 1);
    bool y_found = false;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] == 'y' && (i == 0 || is_v(w[i - 1]))) {
            w[i] = 'Y';
            y_found = true;
        }
    }

    auto regions = mark_regions(w);
    step_1a(w);
    if (!exception2(w)) {
        step_1b(w, regions);
        step_1c(w);
        step_2(w, regions);
        step_3(w, regions);
        step_4(w, regions);
        step_5(w, regions);
    }

    if (y_found) {
        for (auto& c : w) {
            if (c == 'Y') c = 'y';
        }
    }
    return u32_to_utf8(w);
}

}  // namespace titleforge
