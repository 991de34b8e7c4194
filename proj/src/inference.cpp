#include "titleforge/inference.hpp"

#include <algorithm>
#include <filesystem>
#include <limits>

#include "titleforge/text.hpp"

namespace titleforge {

namespace {

std::string supported_list(const std::vector<std::string>& langs) {
    std::string s;
    for (const auto& l : langs) s += (s.empty() ? "" : ", ") + l;
    return s;
}

}  // namespace

UnsupportedLanguage::UnsupportedLanguage(const std::string& lang, std::vector<std::string> supported)
    : InvalidInput("unsupported language '" + lang + "' (supported: " + supported_list(supported) + ")"),
      supported_(std::move(supported)) {}

StepFn make_step_fn(Checkpoint& ckpt, const ModelInput& input) {
    torch::NoGradGuard guard;
    auto& model = ckpt.model;
    auto batch = collate({input}, {{Tokenizer::kEos}}, model->config, ckpt.bank->rows());
    auto embeddings = model->embed_inputs(batch.input_ids, batch.soft_rows, ckpt.bank->vectors);
    auto memory = model->encode(embeddings, batch.attention_mask);
    auto memory_mask = batch.attention_mask;
    const auto vocab = model->config.vocab_size;

    return [&model, memory, memory_mask, vocab](const std::vector<std::vector<TokenId>>& prefixes) {
        torch::NoGradGuard inner;
        auto n = static_cast<std::int64_t>(prefixes.size());
        auto len = static_cast<std::int64_t>(prefixes.front().size()) + 1;
        auto ids = torch::empty({n, len}, torch::kLong);
        auto acc = ids.accessor<std::int64_t, 2>();
        for (std::int64_t i = 0; i < n; ++i) {
            acc[i][0] = Tokenizer::kBos;
            for (std::int64_t t = 1; t < len; ++t) acc[i][t] = prefixes[static_cast<std::size_t>(i)][t - 1];
        }
        auto logits = model->decode(ids, memory.expand({n, -1, -1}), memory_mask.expand({n, -1}));
        auto logp = torch::log_softmax(logits.select(1, len - 1).to(torch::kDouble), -1).contiguous();
        std::vector<std::vector<double>> rows(static_cast<std::size_t>(n));
        const double* data = logp.data_ptr<double>();
        for (std::int64_t i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)].assign(data + i * vocab, data + (i + 1) * vocab);
        return rows;
    };
}

std::vector<Hypothesis> generate_ids(Checkpoint& ckpt, const ModelInput& input, const BeamOptions& options) {
    bool was_training = ckpt.model->is_training();
    if (was_training) ckpt.model->eval();
    auto inner = make_step_fn(ckpt, input);
    constexpr double kNever = -std::numeric_limits<double>::infinity();
    StepFn step = [&](const std::vector<std::vector<TokenId>>& prefixes) {
        auto rows = inner(prefixes);
        for (auto& row : rows) {
            for (auto id : {Tokenizer::kPad, Tokenizer::kUnk, Tokenizer::kBos, Tokenizer::kSoft, Tokenizer::kCode}) {
                row[static_cast<std::size_t>(id)] = kNever;
            }
            if (prefixes.front().empty()) row[static_cast<std::size_t>(Tokenizer::kEos)] = kNever;
        }
        return rows;
    };
    BeamOptions o = options;
    o.max_len = std::min<std::size_t>(o.max_len, static_cast<std::size_t>(ckpt.model->config.max_decoder_len));
    o.max_len = std::min(o.max_len, ckpt.prompt.max_target_length);
    o.eos = Tokenizer::kEos;
    auto out = beam_search(step, o);
    if (was_training) ckpt.model->train();
    return out;
}

Generator::Generator(Checkpoint ckpt) : ckpt_(std::make_shared<Checkpoint>(std::move(ckpt))) {
    ckpt_->check_consistency();
    ckpt_->model->eval();
    version_ = ckpt_->model_version();
}

std::shared_ptr<Generator> Generator::load(const std::string& dir) {
    return std::make_shared<Generator>(load_checkpoint(resolve_model_dir(dir)));
}

std::vector<std::string> Generator::languages() const {
    if (!ckpt_->languages.empty()) return ckpt_->languages;
    std::vector<std::string> out;
    for (const auto& [lang, prefix] : ckpt_->prompt.prefixes) out.push_back(lang);
    return out;
}

GenerationResult Generator::generate(const GenerationRequest& request) const {
    auto langs = languages();
    if (std::find(langs.begin(), langs.end(), request.lang) == langs.end()) {
        throw UnsupportedLanguage(request.lang, langs);
    }
    if (request.beam_size < 1) throw InvalidInput("beam_size must be at least 1");
    if (request.num_candidates < 1 || request.num_candidates > request.beam_size) {
        throw InvalidInput("num_candidates must be between 1 and beam_size (" + std::to_string(request.beam_size) + ")");
    }
    if (request.description.empty() && request.code.empty()) throw InvalidInput("no input modality");

    Quadruplet q;
    q.lang = request.lang;
    q.description = request.description;
    q.code = request.code;
    auto input = ckpt_->prompt.render(q, ckpt_->tokenizer);

    BeamOptions options;
    options.beam_size = request.beam_size;
    options.max_len = request.max_len;
    options.length_normalize = request.length_normalize;
    options.deadline = request.deadline;
    auto hyps = generate_ids(*ckpt_, input, options);

    GenerationResult result;
    result.model_manifest = version_;
    for (auto& h : hyps) {
        if (result.candidates.size() == request.num_candidates) break;
        // Byte tokens can form malformed UTF-8; those sequences become U+FFFD.
        auto title = u32_to_utf8(utf8_to_u32(ckpt_->tokenizer.decode(h.tokens)));
        if (title.empty()) continue;
        result.candidates.push_back(TitleCandidate{std::move(title), h.score, std::move(h.tokens)});
    }
    if (result.candidates.empty()) throw Error("the model produced no non-empty title");
    return result;
}

std::string resolve_model_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    if (fs::exists(fs::path(dir) / "manifest.json")) return dir;
    auto best = fs::path(dir) / "best";
    if (fs::exists(best / "manifest.json")) return best.string();
    throw Error("no model checkpoint in " + dir + " (expected manifest.json or best/manifest.json)");
}

}  // namespace titleforge
