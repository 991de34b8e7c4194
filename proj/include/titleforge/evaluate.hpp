#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "titleforge/inference.hpp"
#include "titleforge/metrics.hpp"

namespace titleforge {

struct EvaluationOptions {
    std::size_t beam_size = 10;
    std::size_t max_len = 64;
    bool length_normalize = true;
    std::optional<std::size_t> limit;  // first N test examples per language
};

struct GenerationRecord {
    std::string lang;
    std::int64_t post_id = 0;
    std::string generated;
    std::string reference;
    std::optional<std::string> error;  // set when generation failed; the record scores 0

    nlohmann::json to_json() const;
};

struct EvaluationResult {
    MetricReport report;
    std::vector<GenerationRecord> records;
    std::string model_version;
    std::size_t failures = 0;

    // {model_version, metrics_params, languages: {lang: {...}}, failures, options}.
    nlohmann::json to_json(const EvaluationOptions& options) const;
    void write_generations(std::ostream& out) const;
};

// Top-1 beam search over every test example. A failed example is logged, kept with an empty
// generation and scored as such.
EvaluationResult evaluate(const Generator& generator, const std::map<std::string, std::vector<Quadruplet>>& test_sets,
                          const EvaluationOptions& options = {});

}  // namespace titleforge
