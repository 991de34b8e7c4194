#include "titleforge/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "titleforge/inference.hpp"
#include "titleforge/log.hpp"
#include "titleforge/metrics.hpp"

namespace titleforge {

namespace fs = std::filesystem;

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidInput(what);
}

std::string join_ids(const std::vector<std::int64_t>& ids) {
    std::string s;
    for (auto id : ids) s += (s.empty() ? "" : ", ") + std::to_string(id);
    return s;
}

// Examples the prompt layout can render; the others are dropped with a warning.
std::vector<Quadruplet> renderable(const std::vector<Quadruplet>& quads, const Checkpoint& ckpt, const std::string& what) {
    std::vector<Quadruplet> out;
    out.reserve(quads.size());
    std::size_t dropped = 0;
    for (const auto& q : quads) {
        try {
            (void)ckpt.prompt.render(q, ckpt.tokenizer);
            out.push_back(q);
        } catch (const InvalidInput&) {
            ++dropped;
        }
    }
    if (dropped > 0) {
        log::warn(std::to_string(dropped) + " " + what + " examples have no input for the " +
                  std::string(to_string(ckpt.prompt.modality)) + " layout and are skipped");
    }
    return out;
}

Batch make_batch(const Checkpoint& ckpt, const std::vector<Quadruplet>& examples) {
    std::vector<ModelInput> inputs;
    std::vector<std::vector<TokenId>> targets;
    inputs.reserve(examples.size());
    targets.reserve(examples.size());
    for (const auto& q : examples) {
        inputs.push_back(ckpt.prompt.render(q, ckpt.tokenizer));
        targets.push_back(encode_target(q.title, ckpt.tokenizer, ckpt.prompt.max_target_length));
    }
    return collate(inputs, targets, ckpt.config, ckpt.bank->rows());
}

std::vector<Quadruplet> head(const std::vector<Quadruplet>& v, std::size_t n) {
    return {v.begin(), v.begin() + static_cast<std::ptrdiff_t>(std::min(n, v.size()))};
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

std::string_view to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::prompt_hybrid: return "hybrid";
        case TrainMode::prompt_hard: return "hard";
        case TrainMode::prompt_soft: return "soft";
        case TrainMode::finetune: return "finetune";
    }
    return "hybrid";
}

std::string_view to_string(SelectBy select) { return select == SelectBy::loss ? "loss" : "rouge"; }

TrainMode parse_train_mode(std::string_view name) {
    if (name == "hybrid" || name == "prompt_hybrid") return TrainMode::prompt_hybrid;
    if (name == "hard" || name == "prompt_hard") return TrainMode::prompt_hard;
    if (name == "soft" || name == "prompt_soft") return TrainMode::prompt_soft;
    if (name == "finetune") return TrainMode::finetune;
    throw InvalidInput("unknown training mode '" + std::string(name) + "' (expected hybrid, hard, soft or finetune)");
}

SelectBy parse_select_by(std::string_view name) {
    if (name == "loss") return SelectBy::loss;
    if (name == "rouge" || name == "rouge_l") return SelectBy::rouge;
    throw InvalidInput("unknown selection criterion '" + std::string(name) + "' (expected loss or rouge)");
}

void TrainingConfig::validate() const {
    require(learning_rate > 0 && std::isfinite(learning_rate), "learning_rate must be positive");
    require(batch_size >= 1, "batch_size must be at least 1");
    require(patience >= 1, "patience must be at least 1");
    require(max_epochs >= 1, "max_epochs must be at least 1");
    require(max_src >= 1 && max_tgt >= 1, "sequence lengths must be positive");
    require(weight_decay >= 0 && max_grad_norm >= 0, "weight_decay and max_grad_norm must be non-negative");
    require(!tasks.empty(), "at least one task language is required");
    require(!(freeze_backbone && mode == TrainMode::finetune),
            "--freeze-backbone leaves nothing to train in finetune mode");
    require(select_sample >= 1 && select_beam >= 1, "selection sample and beam must be positive");
}

PromptConfig TrainingConfig::prompt_config(const PrefixMap& prefixes) const {
    PromptConfig p;
    p.finetune = mode == TrainMode::finetune;
    p.kind = mode == TrainMode::prompt_hard ? TemplateKind::hard
             : mode == TrainMode::prompt_soft ? TemplateKind::soft
                                              : TemplateKind::hybrid;
    p.modality = modality;
    p.max_source_length = max_src;
    p.max_target_length = max_tgt;
    p.prefixes = prefixes;
    return p;
}

nlohmann::json TrainingConfig::to_json() const {
    return {{"learning_rate", learning_rate},
            {"batch_size", batch_size},
            {"max_src", max_src},
            {"max_tgt", max_tgt},
            {"optimizer", "AdamW"},
            {"weight_decay", weight_decay},
            {"max_grad_norm", max_grad_norm},
            {"patience", patience},
            {"max_epochs", max_epochs},
            {"seed", seed},
            {"mode", to_string(mode)},
            {"modality", to_string(modality)},
            {"tasks", tasks},
            {"freeze_backbone", freeze_backbone},
            {"select_by", to_string(select_by)},
            {"select_sample", select_sample},
            {"select_beam", select_beam},
            {"evaluate_initial", evaluate_initial}};
}

// ---------------------------------------------------------------------------
// Batching

std::vector<std::int64_t> TaskBatch::post_ids() const {
    std::vector<std::int64_t> ids;
    for (const auto& q : examples) ids.push_back(q.source_post_id);
    return ids;
}

std::vector<TaskBatch> make_task_batches(const std::map<std::string, CorpusSplit>& splits, std::size_t batch_size,
                                         std::uint64_t seed, std::size_t epoch) {
    require(batch_size >= 1, "batch_size must be at least 1");
    require(!splits.empty(), "no task splits");
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
    std::mt19937_64 rng(seq);
    std::vector<TaskBatch> batches;
    for (const auto& [lang, split] : splits) {
        require(!split.train.empty(), "training split for '" + lang + "' is empty");
        std::vector<std::size_t> order(split.train.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            TaskBatch b;
            b.lang = lang;
            for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) {
                b.examples.push_back(split.train[order[i]]);
            }
            batches.push_back(std::move(b));
        }
    }
    std::shuffle(batches.begin(), batches.end(), rng);
    return batches;
}

// ---------------------------------------------------------------------------
// Early stopping

nlohmann::json EpochRecord::to_json() const {
    nlohmann::json j{{"epoch", epoch}, {"train_loss", train_loss}, {"valid_loss", valid_loss}, {"improved", improved},
                     {"seconds", seconds}};
    if (valid_rouge_l) j["valid_rouge_l"] = *valid_rouge_l;
    return j;
}

bool TrainState::record(EpochRecord r, std::size_t patience, SelectBy select_by) {
    epoch = r.epoch;
    best_validation_loss = std::min(best_validation_loss, r.valid_loss);
    double score = select_by == SelectBy::loss ? -r.valid_loss : r.valid_rouge_l.value_or(0.0);
    r.improved = score > best_selection_score;
    if (r.improved) {
        best_selection_score = score;
        best_epoch = r.epoch;
        epochs_since_improvement = 0;
    } else {
        ++epochs_since_improvement;
    }
    history.push_back(r);
    return epochs_since_improvement >= patience;
}

NonFiniteLoss::NonFiniteLoss(const std::string& lang, std::vector<std::int64_t> post_ids, double value)
    : Error("non-finite loss " + std::to_string(value) + " on a " + lang + " batch with post ids [" +
            join_ids(post_ids) + "]"),
      post_ids_(std::move(post_ids)) {}

// ---------------------------------------------------------------------------
// Loop

double mean_example_loss(Checkpoint& ckpt, const std::vector<Quadruplet>& examples, std::size_t batch_size) {
    require(!examples.empty(), "no examples to evaluate");
    require(batch_size >= 1, "batch_size must be at least 1");
    torch::NoGradGuard guard;
    bool was_training = ckpt.model->is_training();
    ckpt.model->eval();
    double total = 0.0;
    for (std::size_t start = 0; start < examples.size(); start += batch_size) {
        std::vector<Quadruplet> chunk(examples.begin() + static_cast<std::ptrdiff_t>(start),
                                      examples.begin() + static_cast<std::ptrdiff_t>(std::min(examples.size(), start + batch_size)));
        auto out = forward_with_prompts(ckpt.model, ckpt.bank, make_batch(ckpt, chunk));
        total += out.example_losses.sum().item<double>();
    }
    ckpt.model->train(was_training);
    return total / static_cast<double>(examples.size());
}

double generation_rouge_l(Checkpoint& ckpt, const std::vector<Quadruplet>& examples, std::size_t beam_size) {
    require(!examples.empty(), "no examples to generate for");
    BeamOptions options;
    options.beam_size = beam_size;
    options.max_len = ckpt.prompt.max_target_length;
    std::vector<EvalPair> pairs;
    for (const auto& q : examples) {
        auto hyps = generate_ids(ckpt, ckpt.prompt.render(q, ckpt.tokenizer), options);
        auto title = hyps.empty() ? std::string() : ckpt.tokenizer.decode(hyps.front().tokens);
        pairs.push_back(make_eval_pair(title, q.title, q.source_post_id));
    }
    return rouge_l(pairs);
}

Tokenizer train_tokenizer(const std::map<std::string, CorpusSplit>& splits, std::size_t max_vocab,
                          const PrefixMap& prefixes) {
    std::vector<std::string> texts{std::string(kDescriptionCue), std::string(kCodeCue), std::string(kInstruction)};
    for (const auto& [lang, prefix] : prefixes) texts.push_back(prefix);
    for (const auto& [lang, split] : splits) {
        for (const auto& q : split.train) {
            texts.push_back(q.title);
            texts.push_back(q.description);
            texts.push_back(q.code);
        }
    }
    return Tokenizer::train(texts, max_vocab);
}

Checkpoint init_for_training(const TrainingConfig& config, const std::map<std::string, CorpusSplit>& splits,
                             const std::string& preset, std::size_t max_vocab) {
    config.validate();
    std::map<std::string, CorpusSplit> used;
    for (const auto& lang : config.tasks) {
        auto it = splits.find(lang);
        require(it != splits.end(), "no corpus split for task '" + lang + "'");
        used.emplace(lang, it->second);
    }
    auto prompt = config.prompt_config();
    auto tokenizer = train_tokenizer(used, max_vocab, prompt.prefixes);
    auto model = ModelConfig::preset(preset, static_cast<std::int64_t>(tokenizer.size()));
    model.max_encoder_len = static_cast<std::int64_t>(config.max_src);
    model.max_decoder_len = static_cast<std::int64_t>(config.max_tgt);
    return init_checkpoint(model, prompt, std::move(tokenizer), config.tasks, config.seed);
}

void adopt_layout(Checkpoint& ckpt, const TrainingConfig& config) {
    config.validate();
    auto prompt = config.prompt_config(ckpt.prompt.prefixes);
    require(static_cast<std::int64_t>(prompt.max_source_length) <= ckpt.config.max_encoder_len &&
                static_cast<std::int64_t>(prompt.max_target_length) <= ckpt.config.max_decoder_len,
            "max_src/max_tgt exceed the model's position tables (" + std::to_string(ckpt.config.max_encoder_len) +
                "/" + std::to_string(ckpt.config.max_decoder_len) + ")");
    bool same = prompt.finetune == ckpt.prompt.finetune && prompt.modality == ckpt.prompt.modality &&
                (prompt.finetune || prompt.kind == ckpt.prompt.kind);
    ckpt.prompt = prompt;
    if (!same) {
        torch::manual_seed(config.seed);
        ckpt.bank = prompt.finetune ? make_empty_bank(ckpt.config.d_model)
                                    : make_bank(prompt.make_template(), ckpt.tokenizer, ckpt.model);
    }
    ckpt.languages = config.tasks;
    ckpt.check_consistency();
}

TrainState train(const TrainingConfig& config, const std::map<std::string, CorpusSplit>& splits, Checkpoint& ckpt,
                 const std::string& out_dir, const TrainHooks& hooks) {
    config.validate();
    auto expected = config.prompt_config();
    require(expected.finetune == ckpt.prompt.finetune && expected.modality == ckpt.prompt.modality &&
                (expected.finetune || expected.kind == ckpt.prompt.kind),
            "checkpoint prompt layout does not match the training mode/modality");
    ckpt.check_consistency();

    std::map<std::string, CorpusSplit> data;
    std::size_t valid_total = 0;
    for (const auto& lang : config.tasks) {
        auto it = splits.find(lang);
        require(it != splits.end(), "no corpus split for task '" + lang + "'");
        CorpusSplit s;
        s.lang = lang;
        s.train = renderable(it->second.train, ckpt, lang + " train");
        s.valid = renderable(it->second.valid, ckpt, lang + " valid");
        require(!s.train.empty(), "training split for '" + lang + "' is empty");
        if (s.valid.empty()) log::warn("no validation examples for '" + lang + "'; it is left out of the validation loss");
        valid_total += s.valid.size();
        data.emplace(lang, std::move(s));
    }
    require(valid_total > 0, "no validation examples in any task");

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error("cannot create " + out_dir + ": " + ec.message());
    {
        std::ofstream run(fs::path(out_dir) / "run.json");
        run << nlohmann::json{{"training", config.to_json()}, {"model", ckpt.config.to_json()}}.dump(2) << '\n';
        if (!run) throw Error("cannot write run.json in " + out_dir);
    }
    std::ofstream history(fs::path(out_dir) / "history.jsonl");
    if (!history) throw Error("cannot write history.jsonl in " + out_dir);

    torch::manual_seed(config.seed);
    std::vector<torch::Tensor> params;
    if (ckpt.bank->rows() > 0) params.push_back(ckpt.bank->vectors);
    for (auto& p : ckpt.model->parameters()) {
        p.set_requires_grad(!config.freeze_backbone);
        if (!config.freeze_backbone) params.push_back(p);
    }
    require(!params.empty(), "nothing to train: the backbone is frozen and the template has no soft prompts");
    torch::optim::AdamW optimizer(params,
                                  torch::optim::AdamWOptions(config.learning_rate).weight_decay(config.weight_decay));

    auto task_mean = [&](bool valid) {
        std::vector<double> losses;
        for (const auto& [lang, s] : data) {
            const auto& part = valid ? s.valid : s.train;
            if (!part.empty()) losses.push_back(mean_example_loss(ckpt, part, config.batch_size));
        }
        return multitask_loss(losses, static_cast<std::int64_t>(losses.size()));
    };

    TrainState state;
    state.best_checkpoint_path = (fs::path(out_dir) / "best").string();
    if (config.evaluate_initial) {
        state.initial_train_loss = task_mean(false);
        state.initial_valid_loss = task_mean(true);
        log::info("initial train loss " + std::to_string(*state.initial_train_loss) + ", valid loss " +
                  std::to_string(*state.initial_valid_loss));
    }

    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        auto started = std::chrono::steady_clock::now();
        ckpt.model->train();
        double loss_sum = 0.0;
        std::size_t batches_seen = 0;
        for (const auto& batch : make_task_batches(data, config.batch_size, config.seed, epoch)) {
            auto out = forward_with_prompts(ckpt.model, ckpt.bank, make_batch(ckpt, batch.examples));
            double value = out.loss.item<double>();
            if (hooks.inspect_loss) value = hooks.inspect_loss(batch, value);
            if (!std::isfinite(value)) throw NonFiniteLoss(batch.lang, batch.post_ids(), value);
            optimizer.zero_grad();
            out.loss.backward();
            if (config.max_grad_norm > 0) torch::nn::utils::clip_grad_norm_(params, config.max_grad_norm);
            optimizer.step();
            loss_sum += value;
            ++batches_seen;
            if (hooks.on_step) hooks.on_step(++step, batch, value);
        }

        EpochRecord r;
        r.epoch = epoch;
        r.train_loss = loss_sum / static_cast<double>(batches_seen);
        r.valid_loss = task_mean(true);
        if (config.select_by == SelectBy::rouge) {
            std::vector<Quadruplet> sample;
            for (const auto& [lang, s] : data) {
                auto part = head(s.valid, config.select_sample);
                sample.insert(sample.end(), part.begin(), part.end());
            }
            r.valid_rouge_l = generation_rouge_l(ckpt, sample, config.select_beam);
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        bool stop = state.record(r, config.patience, config.select_by);
        const auto& rec = state.history.back();
        if (rec.improved) {
            ckpt.training = {{"config", config.to_json()}, {"epoch", epoch}, {"valid_loss", rec.valid_loss}};
            if (rec.valid_rouge_l) ckpt.training["valid_rouge_l"] = *rec.valid_rouge_l;
            save_checkpoint(state.best_checkpoint_path, ckpt);
        }
        history << rec.to_json().dump() << '\n';
        history.flush();
        if (!history) throw Error("cannot append to history.jsonl in " + out_dir);
        log::info("epoch " + std::to_string(epoch) + ": train loss " + std::to_string(rec.train_loss) +
                  ", valid loss " + std::to_string(rec.valid_loss) +
                  (rec.valid_rouge_l ? ", valid ROUGE-L " + std::to_string(*rec.valid_rouge_l) : std::string()) +
                  (rec.improved ? " (best)" : ""));
        if (hooks.on_epoch) hooks.on_epoch(rec);
        if (stop) {
            state.stopped_early = epoch < config.max_epochs;
            break;
        }
    }

    ckpt = load_checkpoint(state.best_checkpoint_path);
    return state;
}

TrainState train_single_language(TrainingConfig config, const CorpusSplit& split, Checkpoint& ckpt,
                                 const std::string& out_dir, const TrainHooks& hooks) {
    config.tasks = {split.lang};
    return train(config, {{split.lang, split}}, ckpt, out_dir, hooks);
}

}  // namespace titleforge
