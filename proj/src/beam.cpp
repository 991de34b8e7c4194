#include "titleforge/beam.hpp"

#include <algorithm>
#include <string>

namespace titleforge {

namespace {

void check_options(const BeamOptions& o) {
    if (o.beam_size < 1) throw InvalidInput("beam_size must be at least 1");
    if (o.max_len < 1) throw InvalidInput("max_len must be at least 1");
}

void check_deadline(const BeamOptions& o) {
    if (o.deadline && std::chrono::steady_clock::now() > *o.deadline) {
        throw GenerationTimeout("generation exceeded its deadline");
    }
}

std::vector<std::vector<double>> call_step(const StepFn& step, const std::vector<std::vector<TokenId>>& prefixes) {
    auto out = step(prefixes);
    if (out.size() != prefixes.size()) throw Error("step function returned the wrong number of rows");
    for (const auto& row : out) {
        if (row.empty() || row.size() != out.front().size()) throw Error("step function returned ragged rows");
    }
    return out;
}

struct Live {
    std::vector<TokenId> tokens;
    double log_prob = 0.0;
};

struct Candidate {
    double log_prob;
    std::size_t parent;
    TokenId token;
};

}  // namespace

double hypothesis_score(double log_prob, std::size_t length, bool length_normalize) {
    if (!length_normalize || length == 0) return log_prob;
    return log_prob / static_cast<double>(length);
}

Hypothesis greedy_decode(const StepFn& step, const BeamOptions& options) {
    check_options(options);
    Hypothesis h;
    for (std::size_t t = 0; t < options.max_len; ++t) {
        check_deadline(options);
        auto row = call_step(step, {h.tokens}).front();
        auto best = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
        h.tokens.push_back(best);
        h.log_prob += row[static_cast<std::size_t>(best)];
        if (options.eos && best == *options.eos) break;
    }
    h.score = hypothesis_score(h.log_prob, h.tokens.size(), options.length_normalize);
    return h;
}

std::vector<Hypothesis> beam_search(const StepFn& step, const BeamOptions& options) {
    check_options(options);
    const auto k = options.beam_size;
    std::vector<Live> live{Live{}};
    std::vector<Hypothesis> finished;
    auto finish = [&](std::vector<TokenId> tokens, double log_prob) {
        auto score = hypothesis_score(log_prob, tokens.size(), options.length_normalize);
        finished.push_back(Hypothesis{std::move(tokens), log_prob, score});
    };

    for (std::size_t t = 0; t < options.max_len && !live.empty(); ++t) {
        check_deadline(options);
        std::vector<std::vector<TokenId>> prefixes;
        prefixes.reserve(live.size());
        for (const auto& l : live) prefixes.push_back(l.tokens);
        auto rows = call_step(step, prefixes);

        std::vector<Candidate> cands;
        cands.reserve(live.size() * rows.front().size());
        for (std::size_t i = 0; i < live.size(); ++i) {
            for (std::size_t v = 0; v < rows[i].size(); ++v) {
                cands.push_back(Candidate{live[i].log_prob + rows[i][v], i, static_cast<TokenId>(v)});
            }
        }
        auto keep = std::min(cands.size(), 2 * k);
        std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                          [](const Candidate& a, const Candidate& b) {
                              if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                              if (a.parent != b.parent) return a.parent < b.parent;
                              return a.token < b.token;
                          });

        bool last_step = t + 1 == options.max_len;
        std::vector<Live> next;
        for (std::size_t r = 0; r < keep && next.size() < k; ++r) {
            const auto& c = cands[r];
            auto tokens = live[c.parent].tokens;
            tokens.push_back(c.token);
            if (options.eos && c.token == *options.eos) {
                if (r < k) finish(std::move(tokens), c.log_prob);
                continue;
            }
            if (last_step) {
                finish(std::move(tokens), c.log_prob);
                next.push_back(Live{});  // counts towards the beam width only
            } else {
                next.push_back(Live{std::move(tokens), c.log_prob});
            }
        }
        live = last_step ? std::vector<Live>{} : std::move(next);
        if (finished.size() >= k) break;
    }

    if (options.include_greedy && k > 1) {
        auto g = greedy_decode(step, options);
        bool present = std::any_of(finished.begin(), finished.end(),
                                   [&](const Hypothesis& h) { return h.tokens == g.tokens; });
        if (!present) finished.push_back(std::move(g));
    }

    std::stable_sort(finished.begin(), finished.end(),
                     [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; });
    if (finished.size() > k) finished.resize(k);
    return finished;
}

}  // namespace titleforge
