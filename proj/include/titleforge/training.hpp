#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "titleforge/checkpoint.hpp"
#include "titleforge/corpus.hpp"
#include "titleforge/error.hpp"

namespace titleforge {

enum class TrainMode { prompt_hybrid, prompt_hard, prompt_soft, finetune };
enum class SelectBy { loss, rouge };

std::string_view to_string(TrainMode mode);
std::string_view to_string(SelectBy select);
// Accepts hybrid, hard, soft, finetune (and the prompt_ forms).
TrainMode parse_train_mode(std::string_view name);
SelectBy parse_select_by(std::string_view name);

struct TrainingConfig {
    double learning_rate = 5e-5;
    std::size_t batch_size = 16;
    std::size_t max_src = 512;
    std::size_t max_tgt = 64;
    double weight_decay = 0.0;
    double max_grad_norm = 1.0;  // 0 disables clipping
    std::size_t patience = 3;
    std::size_t max_epochs = 10;
    std::uint64_t seed = 42;
    TrainMode mode = TrainMode::prompt_hybrid;
    Modality modality = Modality::bimodal;
    std::vector<std::string> tasks;
    bool freeze_backbone = false;
    SelectBy select_by = SelectBy::loss;
    std::size_t select_sample = 50;  // validation examples per language for ROUGE-L selection
    std::size_t select_beam = 10;
    bool evaluate_initial = false;   // measure train and validation loss before the first update

    // Throws InvalidInput when a value is out of range.
    void validate() const;
    PromptConfig prompt_config(const PrefixMap& prefixes = default_prefixes()) const;
    nlohmann::json to_json() const;
};

struct TaskBatch {
    std::string lang;
    std::vector<Quadruplet> examples;

    std::vector<std::int64_t> post_ids() const;
};

// Single-language batches over the training parts of `splits`. Within an epoch every training
// example appears exactly once; a short remainder batch is kept. Example order per language and
// the global batch order are shuffled from (seed, epoch). Throws InvalidInput on an empty
// training split or batch_size 0.
std::vector<TaskBatch> make_task_batches(const std::map<std::string, CorpusSplit>& splits, std::size_t batch_size,
                                         std::uint64_t seed, std::size_t epoch);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double valid_loss = 0.0;
    std::optional<double> valid_rouge_l;  // fraction, when selecting by ROUGE-L
    bool improved = false;
    double seconds = 0.0;

    nlohmann::json to_json() const;
};

// Early-stopping bookkeeping. Epoch numbers start at 1.
struct TrainState {
    std::size_t epoch = 0;
    double best_validation_loss = std::numeric_limits<double>::infinity();  // minimum over history
    std::size_t best_epoch = 0;                 // epoch of the selected checkpoint
    double best_selection_score = -std::numeric_limits<double>::infinity();  // -loss or ROUGE-L
    std::size_t epochs_since_improvement = 0;
    std::vector<EpochRecord> history;
    std::string best_checkpoint_path;
    std::optional<double> initial_train_loss;
    std::optional<double> initial_valid_loss;
    bool stopped_early = false;

    // Appends the epoch, updates the best-so-far by the selection criterion and returns true
    // when training should stop (patience exhausted).
    bool record(EpochRecord r, std::size_t patience, SelectBy select_by);
};

// Loss is non-finite; the message names the offending batch's post ids.
class NonFiniteLoss : public Error {
public:
    NonFiniteLoss(const std::string& lang, std::vector<std::int64_t> post_ids, double value);
    const std::vector<std::int64_t>& post_ids() const noexcept { return post_ids_; }

private:
    std::vector<std::int64_t> post_ids_;
};

struct TrainHooks {
    std::function<void(const EpochRecord&)> on_epoch;
    std::function<void(std::size_t step, const TaskBatch&, double loss)> on_step;
    // Called before each optimizer step with the batch loss; may replace it (tests inject NaN).
    std::function<double(const TaskBatch&, double loss)> inspect_loss;
};

// Mean per-example summed NLL over `examples` in evaluation mode (batched, no gradients).
double mean_example_loss(Checkpoint& ckpt, const std::vector<Quadruplet>& examples, std::size_t batch_size);

// Multi-task training over `splits` (keys = language tags) with early stopping on the
// validation set. The checkpoint's prompt layout must match config.mode/modality.
// Writes out_dir/run.json, out_dir/history.jsonl and the selected checkpoint to out_dir/best;
// on return `ckpt` holds the reloaded best checkpoint. Throws NonFiniteLoss, or Error when a
// checkpoint cannot be written.
TrainState train(const TrainingConfig& config, const std::map<std::string, CorpusSplit>& splits, Checkpoint& ckpt,
                 const std::string& out_dir, const TrainHooks& hooks = {});

// train() restricted to one language.
TrainState train_single_language(TrainingConfig config, const CorpusSplit& split, Checkpoint& ckpt,
                                 const std::string& out_dir, const TrainHooks& hooks = {});

// Vocabulary over the training parts of `splits` (titles, descriptions, code), the hard-template
// phrases and the task prefixes.
Tokenizer train_tokenizer(const std::map<std::string, CorpusSplit>& splits, std::size_t max_vocab,
                          const PrefixMap& prefixes = default_prefixes());

// Freshly initialized checkpoint for `config`: corpus vocabulary, `preset` shape with the
// encoder and decoder lengths set to max_src and max_tgt, and a bank for the prompt layout.
Checkpoint init_for_training(const TrainingConfig& config, const std::map<std::string, CorpusSplit>& splits,
                             const std::string& preset, std::size_t max_vocab);

// Switches an existing checkpoint to the prompt layout and task list of `config`. The bank is
// rebuilt (from the global torch generator, seeded with config.seed) only when the layout changes.
// Throws InvalidInput when max_src or max_tgt exceed the model's position tables.
void adopt_layout(Checkpoint& ckpt, const TrainingConfig& config);

// Top-1 ROUGE-L (fraction) of beam-searched titles against references.
double generation_rouge_l(Checkpoint& ckpt, const std::vector<Quadruplet>& examples, std::size_t beam_size);

}  // namespace titleforge
