#include "titleforge/evaluate.hpp"

#include "titleforge/log.hpp"

namespace titleforge {

nlohmann::json GenerationRecord::to_json() const {
    nlohmann::json j{{"lang", lang}, {"post_id", post_id}, {"generated", generated}, {"reference", reference}};
    if (error) j["error"] = *error;
    return j;
}

nlohmann::json EvaluationResult::to_json(const EvaluationOptions& options) const {
    nlohmann::json j;
    j["model_version"] = model_version;
    j["metrics_params"] = metrics_params();
    j["languages"] = report.to_json();
    j["failures"] = failures;
    j["options"] = {{"beam_size", options.beam_size},
                    {"max_len", options.max_len},
                    {"length_normalize", options.length_normalize},
                    {"candidates", 1}};
    if (options.limit) j["options"]["limit"] = *options.limit;
    return j;
}

void EvaluationResult::write_generations(std::ostream& out) const {
    for (const auto& r : records) out << r.to_json().dump() << '\n';
}

EvaluationResult evaluate(const Generator& generator, const std::map<std::string, std::vector<Quadruplet>>& test_sets,
                          const EvaluationOptions& options) {
    EvaluationResult result;
    result.model_version = generator.model_version();
    for (const auto& [lang, quads] : test_sets) {
        std::size_t n = options.limit ? std::min(*options.limit, quads.size()) : quads.size();
        if (n == 0) {
            log::warn("no test examples for '" + lang + "'");
            continue;
        }
        std::vector<EvalPair> pairs;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& q = quads[i];
            GenerationRecord rec{lang, q.source_post_id, "", q.title, std::nullopt};
            try {
                GenerationRequest req;
                req.lang = lang;
                req.description = q.description;
                req.code = q.code;
                req.num_candidates = 1;
                req.beam_size = options.beam_size;
                req.max_len = options.max_len;
                req.length_normalize = options.length_normalize;
                rec.generated = generator.generate(req).candidates.front().title;
            } catch (const std::exception& e) {
                rec.error = e.what();
                ++result.failures;
                log::warn("post " + std::to_string(q.source_post_id) + " (" + lang + "): " + e.what());
            }
            pairs.push_back(make_eval_pair(rec.generated, rec.reference, rec.post_id));
            result.records.push_back(std::move(rec));
        }
        result.report.add(lang, score_all(pairs));
        log::info("evaluated " + std::to_string(n) + " " + lang + " examples");
    }
    return result;
}

}  // namespace titleforge
