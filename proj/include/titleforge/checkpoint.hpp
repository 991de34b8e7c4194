#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "titleforge/model.hpp"
#include "titleforge/prompt.hpp"
#include "titleforge/tokenizer.hpp"

namespace titleforge {

// Everything needed to reproduce a model's behaviour. On disk, a directory with
//   manifest.json   format, model_version, model config, prompt config, vocabulary fingerprint,
//                   bank rows, languages, training metadata
//   tokenizer.json  the vocabulary
//   model.pt        encoder-decoder weights
//   bank.pt         soft-prompt vectors
struct Checkpoint {
    ModelConfig config;
    PromptConfig prompt;
    Tokenizer tokenizer;
    Seq2SeqModel model{nullptr};
    SoftPromptBank bank{nullptr};
    std::vector<std::string> languages;
    nlohmann::json training = nlohmann::json::object();

    // Content hash of weights, bank, vocabulary and prompt config, e.g. "tf-0123456789abcdef".
    std::string model_version() const;
    // The number of bank rows the prompt layout needs with this vocabulary.
    std::int64_t expected_bank_rows() const;
    // Throws ManifestMismatch if the parts do not fit together.
    void check_consistency() const;
};

// Fresh weights drawn after torch::manual_seed(seed); the bank follows the prompt layout.
Checkpoint init_checkpoint(const ModelConfig& config, const PromptConfig& prompt, Tokenizer tokenizer,
                           std::vector<std::string> languages, std::uint64_t seed);

// Deep copy with independent tensors.
Checkpoint clone_checkpoint(const Checkpoint& ckpt);

void save_checkpoint(const std::string& dir, const Checkpoint& ckpt);
// Throws ManifestMismatch when the stored parts disagree with the manifest, Error on I/O failure.
Checkpoint load_checkpoint(const std::string& dir);
nlohmann::json read_manifest(const std::string& dir);

}  // namespace titleforge
