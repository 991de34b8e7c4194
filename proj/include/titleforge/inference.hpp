#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "titleforge/beam.hpp"
#include "titleforge/checkpoint.hpp"
#include "titleforge/error.hpp"

namespace titleforge {

// Request for a language the model was not trained for.
class UnsupportedLanguage : public InvalidInput {
public:
    UnsupportedLanguage(const std::string& lang, std::vector<std::string> supported);
    const std::vector<std::string>& supported() const noexcept { return supported_; }

private:
    std::vector<std::string> supported_;
};

struct GenerationRequest {
    std::string lang;
    std::string description;
    std::string code;
    std::size_t num_candidates = 3;
    std::size_t beam_size = 10;
    std::size_t max_len = 64;
    bool length_normalize = true;
    std::optional<std::chrono::steady_clock::time_point> deadline;
};

struct TitleCandidate {
    std::string title;
    double score = 0.0;  // length-normalized log-probability unless normalization is off
    std::vector<TokenId> tokens;
};

struct GenerationResult {
    std::vector<TitleCandidate> candidates;
    std::string model_manifest;  // model_version of the checkpoint
};

// What the HTTP service needs from a model.
class TitleGenerator {
public:
    virtual ~TitleGenerator() = default;
    virtual GenerationResult generate(const GenerationRequest& request) const = 0;
    virtual std::vector<std::string> languages() const = 0;
    virtual std::string model_version() const = 0;
};

// Beam search over a checkpoint's decoder for one rendered input. Special tokens other than
// </s> are never generated, and </s> is not allowed as the first token.
std::vector<Hypothesis> generate_ids(Checkpoint& ckpt, const ModelInput& input, const BeamOptions& options);

// Greedy and beam decoding share this step function; exposed for tests.
StepFn make_step_fn(Checkpoint& ckpt, const ModelInput& input);

class Generator : public TitleGenerator {
public:
    explicit Generator(Checkpoint ckpt);
    // Throws Error / ManifestMismatch when the directory does not hold a consistent checkpoint.
    static std::shared_ptr<Generator> load(const std::string& dir);

    // Throws UnsupportedLanguage, InvalidInput ("no input modality", bad candidate counts)
    // or GenerationTimeout.
    GenerationResult generate(const GenerationRequest& request) const override;
    std::vector<std::string> languages() const override;
    std::string model_version() const override { return version_; }

    const Checkpoint& checkpoint() const { return *ckpt_; }

private:
    std::shared_ptr<Checkpoint> ckpt_;
    std::string version_;
};

// A checkpoint directory, or a training output directory holding one under best/.
std::string resolve_model_dir(const std::string& dir);

}  // namespace titleforge
