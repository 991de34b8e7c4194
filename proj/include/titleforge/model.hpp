#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "titleforge/prompt.hpp"
#include "titleforge/tokenizer.hpp"

namespace titleforge {

// Encoder-decoder shape. num_layers applies to the encoder and the decoder alike.
struct ModelConfig {
    std::int64_t vocab_size = 0;
    std::int64_t d_model = 768;
    std::int64_t num_heads = 12;
    std::int64_t num_layers = 12;
    std::int64_t d_ff = 3072;
    std::int64_t max_encoder_len = 512;
    std::int64_t max_decoder_len = 64;
    double dropout = 0.1;

    std::int64_t d_k() const { return d_model / num_heads; }
    // Throws InvalidInput when a field is out of range.
    void validate() const;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);

    static ModelConfig base(std::int64_t vocab_size);
    // A few-million-parameter model that trains on one CPU core.
    static ModelConfig small(std::int64_t vocab_size);
    static ModelConfig preset(const std::string& name, std::int64_t vocab_size);
};

struct RMSNormImpl : torch::nn::Module {
    explicit RMSNormImpl(std::int64_t dim, double eps = 1e-6);
    torch::Tensor forward(const torch::Tensor& x);

    torch::Tensor weight;
    double eps;
};
TORCH_MODULE(RMSNorm);

// Scaled dot-product attention with per-head projections packed into bias-free linear maps.
// Head i uses output columns [i*d_k, (i+1)*d_k) of w_q, w_k, w_v.
struct MultiHeadAttentionImpl : torch::nn::Module {
    MultiHeadAttentionImpl(std::int64_t d_model, std::int64_t num_heads);
    // query [B, Tq, d], memory [B, Tk, d], keep [B or 1, Tq or 1, Tk] (true = attend).
    torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& memory, const torch::Tensor& keep);

    std::int64_t num_heads;
    std::int64_t d_k;
    torch::nn::Linear w_q{nullptr}, w_k{nullptr}, w_v{nullptr}, w_o{nullptr};
};
TORCH_MODULE(MultiHeadAttention);

struct FeedForwardImpl : torch::nn::Module {
    FeedForwardImpl(std::int64_t d_model, std::int64_t d_ff, double dropout);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Linear wi{nullptr}, wo{nullptr};
    torch::nn::Dropout dropout{nullptr};
};
TORCH_MODULE(FeedForward);

struct EncoderLayerImpl : torch::nn::Module {
    EncoderLayerImpl(const ModelConfig& config);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& keep);

    RMSNorm norm_attn{nullptr}, norm_ff{nullptr};
    MultiHeadAttention attn{nullptr};
    FeedForward ff{nullptr};
    torch::nn::Dropout dropout{nullptr};
};
TORCH_MODULE(EncoderLayer);

struct DecoderLayerImpl : torch::nn::Module {
    DecoderLayerImpl(const ModelConfig& config);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& self_keep, const torch::Tensor& memory,
                          const torch::Tensor& memory_keep);

    RMSNorm norm_self{nullptr}, norm_cross{nullptr}, norm_ff{nullptr};
    MultiHeadAttention self_attn{nullptr}, cross_attn{nullptr};
    FeedForward ff{nullptr};
    torch::nn::Dropout dropout{nullptr};
};
TORCH_MODULE(DecoderLayer);

// Pre-norm transformer encoder-decoder with learned absolute positions and a logit head tied
// to the token embedding (scaled by d_model^-0.5).
struct Seq2SeqModelImpl : torch::nn::Module {
    explicit Seq2SeqModelImpl(const ModelConfig& config);

    // Token embeddings [B, T, d] where soft_rows >= 0 take the given bank row instead.
    torch::Tensor embed_inputs(const torch::Tensor& input_ids, const torch::Tensor& soft_rows,
                               const torch::Tensor& bank);
    // Encoder states [B, T, d] from input embeddings and key mask [B, T].
    torch::Tensor encode(const torch::Tensor& input_embeddings, const torch::Tensor& attention_mask);
    // Logits [B, T, V] for decoder inputs [B, T].
    torch::Tensor decode(const torch::Tensor& decoder_input_ids, const torch::Tensor& memory,
                         const torch::Tensor& memory_mask);

    ModelConfig config;
    torch::nn::Embedding embed{nullptr};
    torch::nn::Embedding encoder_positions{nullptr};
    torch::nn::Embedding decoder_positions{nullptr};
    torch::nn::ModuleList encoder_layers{nullptr};
    torch::nn::ModuleList decoder_layers{nullptr};
    RMSNorm encoder_norm{nullptr}, decoder_norm{nullptr};
    torch::nn::Dropout dropout{nullptr};
};
TORCH_MODULE(Seq2SeqModel);

// Draws every weight from the global torch generator; call torch::manual_seed first.
Seq2SeqModel make_model(const ModelConfig& config);

// Trainable soft-prompt vectors [rows, d_model]. init_source[i] is the token whose embedding
// row i was copied from, or -1 for a random row.
struct SoftPromptBankImpl : torch::nn::Module {
    SoftPromptBankImpl(std::int64_t rows, std::int64_t d_model);

    std::int64_t rows() const { return vectors.size(0); }

    torch::Tensor vectors;
    std::vector<std::int64_t> init_source;
};
TORCH_MODULE(SoftPromptBank);

// One row per soft placeholder of the template; rows with an init phrase copy its token
// embeddings, the others are drawn from N(0, s^2) with s the embedding table's standard deviation.
SoftPromptBank make_bank(const PromptTemplate& tmpl, const Tokenizer& tokenizer, const Seq2SeqModel& model);
SoftPromptBank make_empty_bank(std::int64_t d_model);

// Padded tensors for a batch of examples.
struct Batch {
    torch::Tensor input_ids;          // [B, S] int64
    torch::Tensor soft_rows;          // [B, S] int64, -1 where no bank row applies
    torch::Tensor attention_mask;     // [B, S] bool
    torch::Tensor decoder_input_ids;  // [B, T] int64: <bos> followed by the target shifted right
    torch::Tensor labels;             // [B, T] int64, padded with <pad>
    torch::Tensor label_mask;         // [B, T] bool, false on padding
};

// Validates ids, soft rows and lengths against the model and bank, then pads.
// Throws InvalidInput on an out-of-range token id, a soft position without a bank row,
// an empty or over-long target, or an over-long input.
Batch collate(const std::vector<ModelInput>& inputs, const std::vector<std::vector<TokenId>>& targets,
              const ModelConfig& config, std::int64_t bank_rows);

struct ForwardOutput {
    torch::Tensor logits;          // [B, T, V]
    torch::Tensor example_losses;  // [B], summed token NLL per example
    torch::Tensor loss;            // mean of example_losses
};

// Sum over unmasked positions of -log softmax(logits)[label], per example.
torch::Tensor sequence_nll(const torch::Tensor& logits, const torch::Tensor& labels, const torch::Tensor& label_mask);

// Teacher-forced forward pass. Soft positions take bank rows; loss = mean over examples of the
// summed target-token negative log-likelihood, padding excluded.
ForwardOutput forward_with_prompts(Seq2SeqModel& model, const SoftPromptBank& bank, const Batch& batch);
ForwardOutput forward_with_prompts(Seq2SeqModel& model, const SoftPromptBank& bank, const ModelInput& input,
                                   const std::vector<TokenId>& target_ids);

// (sum of task_losses) / num_tasks. Throws InvalidInput on an empty list, num_tasks < 1,
// or more losses than tasks.
double multitask_loss(const std::vector<double>& task_losses, std::int64_t num_tasks);
torch::Tensor multitask_loss(const std::vector<torch::Tensor>& task_losses, std::int64_t num_tasks);

}  // namespace titleforge
