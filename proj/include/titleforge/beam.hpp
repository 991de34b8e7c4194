#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "titleforge/error.hpp"
#include "titleforge/tokenizer.hpp"

namespace titleforge {

class GenerationTimeout : public Error {
public:
    using Error::Error;
};

struct BeamOptions {
    std::size_t beam_size = 10;
    std::size_t max_len = 64;
    // Rank finished hypotheses by log-probability divided by token count.
    bool length_normalize = true;
    // A hypothesis ending in this token is complete. Without one, every hypothesis runs to max_len.
    std::optional<TokenId> eos = Tokenizer::kEos;
    // Also decode greedily and add that sequence to the pool, so the best un-normalized
    // score is never below greedy decoding.
    bool include_greedy = true;
    std::optional<std::chrono::steady_clock::time_point> deadline;
};

struct Hypothesis {
    std::vector<TokenId> tokens;  // generated tokens, including the end token if one was produced
    double log_prob = 0.0;        // sum of token log-probabilities
    double score = 0.0;           // ranking score: log_prob, or log_prob / tokens.size()

    bool operator==(const Hypothesis&) const = default;
};

// Next-token log-probabilities [prefixes.size()][vocab] for each prefix of generated tokens.
// All prefixes passed in one call have the same length.
using StepFn = std::function<std::vector<std::vector<double>>(const std::vector<std::vector<TokenId>>& prefixes)>;

double hypothesis_score(double log_prob, std::size_t length, bool length_normalize);

// Synchronous beam search. Each step expands every live hypothesis by every token and keeps
// the beam_size best by log-probability; a candidate ending in eos is set aside as finished
// when it ranks within the first beam_size. Search stops once beam_size hypotheses have
// finished, no live hypothesis remains, or max_len is reached (live hypotheses then count
// as finished). Returns distinct hypotheses sorted by score, best first, at most beam_size.
// Ties keep the order of (parent rank, token id). Throws GenerationTimeout past the deadline.
std::vector<Hypothesis> beam_search(const StepFn& step, const BeamOptions& options);

// Arg-max token at every step (lowest id on ties) until eos or max_len.
Hypothesis greedy_decode(const StepFn& step, const BeamOptions& options);

}  // namespace titleforge
