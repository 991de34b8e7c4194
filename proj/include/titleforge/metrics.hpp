#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace titleforge {

using Tokens = std::vector<std::string>;

struct EvalPair {
    Tokens candidate;
    std::vector<Tokens> references;
    std::int64_t doc_id = 0;
};

// Tokenizes both sides with word_tokens.
EvalPair make_eval_pair(std::string_view candidate, std::string_view reference, std::int64_t doc_id = 0);

// LCS F-score with beta 1.2; multiple references take the best precision and the best recall.
double rouge_l(const EvalPair& pair);
double rouge_l(const std::vector<EvalPair>& pairs);

enum class BleuSmoothing {
    none,     // plain modified precision; any zero precision gives 0
    toolkit,  // adds 1e-15 to matches and 1e-9 to totals, as the reference scorer does
};

// Corpus BLEU-1..4 with closest reference length for the brevity penalty.
std::array<double, 4> bleu_all(const std::vector<EvalPair>& pairs, BleuSmoothing smoothing = BleuSmoothing::toolkit);
double bleu(const std::vector<EvalPair>& pairs, int n, BleuSmoothing smoothing = BleuSmoothing::toolkit);

struct MeteorParams {
    double alpha = 0.85;
    double beta = 0.2;
    double gamma = 0.6;
    double delta = 0.75;
    double exact_weight = 1.0;
    double stem_weight = 0.6;
    int beam_size = 40;
};

// Sufficient statistics of one aligned segment (or a sum of segments).
struct MeteorStats {
    double test_length = 0;
    double reference_length = 0;
    double test_function_words = 0;
    double reference_function_words = 0;
    // Index 0 is the exact stage, 1 the stem stage.
    std::array<double, 2> test_content{};
    std::array<double, 2> reference_content{};
    std::array<double, 2> test_function{};
    std::array<double, 2> reference_function{};
    double chunks = 0;
    double test_word_matches = 0;
    double reference_word_matches = 0;

    bool perfect() const;
    // Sums statistics; chunks of a perfect segment are not added.
    void add(const MeteorStats& other);
};

// Punctuation and quote normalization applied before alignment, then lowercasing.
std::string meteor_normalize(std::string_view line);

MeteorStats meteor_stats(const Tokens& candidate, const Tokens& reference, const MeteorParams& params = {});
double meteor_score(const MeteorStats& stats, const MeteorParams& params = {});
// Per-pair scores against the first reference.
std::vector<double> meteor_segments(const std::vector<EvalPair>& pairs, const MeteorParams& params = {});
// Corpus score from summed statistics.
double meteor(const std::vector<EvalPair>& pairs, const MeteorParams& params = {});

// Consensus TF-IDF score with Gaussian length penalty (sigma 6), clipped counts and x10 scaling.
std::vector<double> cider_segments(const std::vector<EvalPair>& pairs);
double cider(const std::vector<EvalPair>& pairs);

// All metrics as fractions (cider raw).
struct Scores {
    double rouge_l = 0;
    double meteor = 0;
    std::array<double, 4> bleu{};
    double cider = 0;
    std::size_t pairs = 0;
};

Scores score_all(const std::vector<EvalPair>& pairs);

// Per-language metrics; ROUGE-L, METEOR and BLEU as percentages, CIDEr raw.
struct MetricReport {
    std::map<std::string, Scores> languages;

    void add(const std::string& lang, const Scores& fractions);
    nlohmann::json to_json() const;
    std::string to_table() const;
};

// The fixed parameters of every metric, written next to each report.
nlohmann::json metrics_params();

}  // namespace titleforge
