#include "titleforge/model.hpp"

#include <cmath>
#include <limits>

#include "titleforge/error.hpp"

namespace titleforge {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidInput(what);
}

void init_linear(const torch::nn::Linear& linear) {
    torch::NoGradGuard guard;
    auto fan_in = static_cast<double>(linear->weight.size(1));
    linear->weight.normal_(0.0, 1.0 / std::sqrt(fan_in));
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void ModelConfig::validate() const {
    require(vocab_size > Tokenizer::kFirstWord - 1, "vocab_size must cover the special and byte tokens");
    require(d_model > 0 && num_heads > 0, "d_model and num_heads must be positive");
    require(d_model % num_heads == 0, "d_model (" + std::to_string(d_model) + ") must be divisible by num_heads (" +
                                          std::to_string(num_heads) + ")");
    require(num_layers > 0 && d_ff > 0, "num_layers and d_ff must be positive");
    require(max_encoder_len > 0 && max_decoder_len > 0, "sequence lengths must be positive");
    require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
}

nlohmann::json ModelConfig::to_json() const {
    return {{"vocab_size", vocab_size}, {"d_model", d_model},   {"num_heads", num_heads},
            {"num_layers", num_layers}, {"d_ff", d_ff},         {"max_encoder_len", max_encoder_len},
            {"max_decoder_len", max_decoder_len}, {"dropout", dropout}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<std::int64_t>();
    c.d_model = j.at("d_model").get<std::int64_t>();
    c.num_heads = j.at("num_heads").get<std::int64_t>();
    c.num_layers = j.at("num_layers").get<std::int64_t>();
    c.d_ff = j.at("d_ff").get<std::int64_t>();
    c.max_encoder_len = j.at("max_encoder_len").get<std::int64_t>();
    c.max_decoder_len = j.at("max_decoder_len").get<std::int64_t>();
    c.dropout = j.value("dropout", 0.1);
    c.validate();
    return c;
}

ModelConfig ModelConfig::base(std::int64_t vocab_size) {
    ModelConfig c;
    c.vocab_size = vocab_size;
    return c;
}

ModelConfig ModelConfig::small(std::int64_t vocab_size) {
    ModelConfig c;
    c.vocab_size = vocab_size;
    c.d_model = 256;
    c.num_heads = 4;
    c.num_layers = 2;
    c.d_ff = 1024;
    c.dropout = 0.0;
    return c;
}

ModelConfig ModelConfig::preset(const std::string& name, std::int64_t vocab_size) {
    if (name == "base") return base(vocab_size);
    if (name == "small") return small(vocab_size);
    throw InvalidInput("unknown model preset '" + name + "' (expected base or small)");
}

// ---------------------------------------------------------------------------
// Layers

RMSNormImpl::RMSNormImpl(std::int64_t dim, double eps_) : eps(eps_) {
    weight = register_parameter("weight", torch::ones({dim}));
}

torch::Tensor RMSNormImpl::forward(const torch::Tensor& x) {
    auto rms = torch::rsqrt(x.pow(2).mean(-1, true) + eps);
    return x * rms * weight;
}

MultiHeadAttentionImpl::MultiHeadAttentionImpl(std::int64_t d_model, std::int64_t heads)
    : num_heads(heads), d_k(d_model / heads) {
    auto linear = [&](const char* name) {
        auto l = register_module(name, torch::nn::Linear(torch::nn::LinearOptions(d_model, d_model).bias(false)));
        init_linear(l);
        return l;
    };
    w_q = linear("w_q");
    w_k = linear("w_k");
    w_v = linear("w_v");
    w_o = linear("w_o");
}

torch::Tensor MultiHeadAttentionImpl::forward(const torch::Tensor& query, const torch::Tensor& memory,
                                              const torch::Tensor& keep) {
    auto b = query.size(0);
    auto split = [&](const torch::Tensor& x) { return x.view({b, x.size(1), num_heads, d_k}).transpose(1, 2); };
    auto q = split(w_q(query));
    auto k = split(w_k(memory));
    auto v = split(w_v(memory));
    auto scores = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(d_k));
    scores = scores.masked_fill(keep.logical_not().unsqueeze(1), -std::numeric_limits<double>::infinity());
    auto context = torch::matmul(torch::softmax(scores, -1), v);
    return w_o(context.transpose(1, 2).reshape({b, query.size(1), num_heads * d_k}));
}

FeedForwardImpl::FeedForwardImpl(std::int64_t d_model, std::int64_t d_ff, double p) {
    wi = register_module("wi", torch::nn::Linear(torch::nn::LinearOptions(d_model, d_ff).bias(false)));
    wo = register_module("wo", torch::nn::Linear(torch::nn::LinearOptions(d_ff, d_model).bias(false)));
    dropout = register_module("dropout", torch::nn::Dropout(p));
    init_linear(wi);
    init_linear(wo);
}

torch::Tensor FeedForwardImpl::forward(const torch::Tensor& x) { return wo(dropout(torch::relu(wi(x)))); }

EncoderLayerImpl::EncoderLayerImpl(const ModelConfig& c) {
    norm_attn = register_module("norm_attn", RMSNorm(c.d_model));
    attn = register_module("attn", MultiHeadAttention(c.d_model, c.num_heads));
    norm_ff = register_module("norm_ff", RMSNorm(c.d_model));
    ff = register_module("ff", FeedForward(c.d_model, c.d_ff, c.dropout));
    dropout = register_module("dropout", torch::nn::Dropout(c.dropout));
}

torch::Tensor EncoderLayerImpl::forward(const torch::Tensor& x, const torch::Tensor& keep) {
    auto h = norm_attn(x);
    auto y = x + dropout(attn(h, h, keep));
    return y + dropout(ff(norm_ff(y)));
}

DecoderLayerImpl::DecoderLayerImpl(const ModelConfig& c) {
    norm_self = register_module("norm_self", RMSNorm(c.d_model));
    self_attn = register_module("self_attn", MultiHeadAttention(c.d_model, c.num_heads));
    norm_cross = register_module("norm_cross", RMSNorm(c.d_model));
    cross_attn = register_module("cross_attn", MultiHeadAttention(c.d_model, c.num_heads));
    norm_ff = register_module("norm_ff", RMSNorm(c.d_model));
    ff = register_module("ff", FeedForward(c.d_model, c.d_ff, c.dropout));
    dropout = register_module("dropout", torch::nn::Dropout(c.dropout));
}

torch::Tensor DecoderLayerImpl::forward(const torch::Tensor& x, const torch::Tensor& self_keep,
                                        const torch::Tensor& memory, const torch::Tensor& memory_keep) {
    auto h = norm_self(x);
    auto y = x + dropout(self_attn(h, h, self_keep));
    y = y + dropout(cross_attn(norm_cross(y), memory, memory_keep));
    return y + dropout(ff(norm_ff(y)));
}

// ---------------------------------------------------------------------------
// Model

Seq2SeqModelImpl::Seq2SeqModelImpl(const ModelConfig& c) : config(c) {
    config.validate();
    embed = register_module("embed", torch::nn::Embedding(c.vocab_size, c.d_model));
    encoder_positions = register_module("encoder_positions", torch::nn::Embedding(c.max_encoder_len, c.d_model));
    decoder_positions = register_module("decoder_positions", torch::nn::Embedding(c.max_decoder_len, c.d_model));
    encoder_layers = register_module("encoder_layers", torch::nn::ModuleList());
    decoder_layers = register_module("decoder_layers", torch::nn::ModuleList());
    for (std::int64_t i = 0; i < c.num_layers; ++i) {
        encoder_layers->push_back(EncoderLayer(c));
        decoder_layers->push_back(DecoderLayer(c));
    }
    encoder_norm = register_module("encoder_norm", RMSNorm(c.d_model));
    decoder_norm = register_module("decoder_norm", RMSNorm(c.d_model));
    dropout = register_module("dropout", torch::nn::Dropout(c.dropout));

    torch::NoGradGuard guard;
    embed->weight.normal_(0.0, 1.0);
    encoder_positions->weight.normal_(0.0, 0.1);
    decoder_positions->weight.normal_(0.0, 0.1);
}

torch::Tensor Seq2SeqModelImpl::embed_inputs(const torch::Tensor& input_ids, const torch::Tensor& soft_rows,
                                             const torch::Tensor& bank) {
    auto tokens = embed->forward(input_ids);
    if (!soft_rows.defined() || !soft_rows.ge(0).any().item<bool>()) return tokens;
    auto use_bank = soft_rows.ge(0).unsqueeze(-1);
    auto rows = bank.index_select(0, soft_rows.clamp_min(0).reshape({-1})).view_as(tokens);
    return torch::where(use_bank, rows, tokens);
}

torch::Tensor Seq2SeqModelImpl::encode(const torch::Tensor& input_embeddings, const torch::Tensor& attention_mask) {
    auto positions = torch::arange(input_embeddings.size(1), torch::kLong);
    auto x = dropout(input_embeddings + encoder_positions(positions).unsqueeze(0));
    auto keep = attention_mask.unsqueeze(1);
    for (const auto& layer : *encoder_layers) x = layer->as<EncoderLayer>()->forward(x, keep);
    return encoder_norm(x);
}

torch::Tensor Seq2SeqModelImpl::decode(const torch::Tensor& decoder_input_ids, const torch::Tensor& memory,
                                       const torch::Tensor& memory_mask) {
    auto t = decoder_input_ids.size(1);
    auto positions = torch::arange(t, torch::kLong);
    auto x = dropout(embed(decoder_input_ids) + decoder_positions(positions).unsqueeze(0));
    auto causal = torch::ones({t, t}, torch::kBool).tril().unsqueeze(0);
    auto memory_keep = memory_mask.unsqueeze(1);
    for (const auto& layer : *decoder_layers) {
        x = layer->as<DecoderLayer>()->forward(x, causal, memory, memory_keep);
    }
    x = decoder_norm(x) * (1.0 / std::sqrt(static_cast<double>(config.d_model)));
    return torch::matmul(x, embed->weight.t());
}

Seq2SeqModel make_model(const ModelConfig& config) { return Seq2SeqModel(config); }

// ---------------------------------------------------------------------------
// Soft prompts

SoftPromptBankImpl::SoftPromptBankImpl(std::int64_t rows, std::int64_t d_model)
    : init_source(static_cast<std::size_t>(rows), -1) {
    vectors = register_parameter("vectors", torch::zeros({rows, d_model}));
}

SoftPromptBank make_bank(const PromptTemplate& tmpl, const Tokenizer& tokenizer, const Seq2SeqModel& model) {
    auto spec = soft_init_spec(tmpl, tokenizer);
    std::int64_t rows = 0;
    for (const auto& s : spec) rows += static_cast<std::int64_t>(s.width());
    SoftPromptBank bank(rows, model->config.d_model);
    torch::NoGradGuard guard;
    const auto& table = model->embed->weight;
    bank->vectors.set_data(bank->vectors.to(table.dtype()));
    auto std = table.numel() > 1 ? table.std().item<double>() : 1.0;
    std::int64_t row = 0;
    for (const auto& s : spec) {
        if (s.random_init()) {
            bank->vectors[row].normal_(0.0, std);
            bank->init_source[static_cast<std::size_t>(row)] = -1;
            ++row;
            continue;
        }
        for (auto id : s.init_token_ids) {
            require(id >= 0 && id < table.size(0), "soft init token id out of range");
            bank->vectors[row].copy_(table[id]);
            bank->init_source[static_cast<std::size_t>(row)] = id;
            ++row;
        }
    }
    return bank;
}

SoftPromptBank make_empty_bank(std::int64_t d_model) { return SoftPromptBank(0, d_model); }

// ---------------------------------------------------------------------------
// Loss

Batch collate(const std::vector<ModelInput>& inputs, const std::vector<std::vector<TokenId>>& targets,
              const ModelConfig& config, std::int64_t bank_rows) {
    require(!inputs.empty(), "empty batch");
    require(inputs.size() == targets.size(), "inputs and targets differ in count");
    auto n = static_cast<std::int64_t>(inputs.size());
    std::int64_t src_len = 0, tgt_len = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto& in = inputs[i];
        const auto& tgt = targets[i];
        require(!in.token_ids.empty(), "empty encoder input");
        require(static_cast<std::int64_t>(in.size()) <= config.max_encoder_len,
                "input of " + std::to_string(in.size()) + " tokens exceeds max_encoder_len " +
                    std::to_string(config.max_encoder_len));
        require(!tgt.empty(), "empty target");
        require(static_cast<std::int64_t>(tgt.size()) <= config.max_decoder_len,
                "target of " + std::to_string(tgt.size()) + " tokens exceeds max_decoder_len " +
                    std::to_string(config.max_decoder_len));
        for (auto id : in.token_ids) {
            require(id >= 0 && id < config.vocab_size, "token id " + std::to_string(id) + " out of range [0, " +
                                                           std::to_string(config.vocab_size) + ")");
        }
        for (auto id : tgt) {
            require(id >= 0 && id < config.vocab_size, "target token id " + std::to_string(id) +
                                                           " out of range [0, " + std::to_string(config.vocab_size) +
                                                           ")");
        }
        for (auto [pos, row] : in.soft_positions) {
            require(pos < in.size(), "soft position beyond the input");
            require(static_cast<std::int64_t>(row) < bank_rows,
                    "soft position uses bank row " + std::to_string(row) + " but the bank has " +
                        std::to_string(bank_rows) + " rows");
        }
        src_len = std::max<std::int64_t>(src_len, static_cast<std::int64_t>(in.size()));
        tgt_len = std::max<std::int64_t>(tgt_len, static_cast<std::int64_t>(tgt.size()));
    }

    Batch b;
    b.input_ids = torch::full({n, src_len}, Tokenizer::kPad, torch::kLong);
    b.soft_rows = torch::full({n, src_len}, -1, torch::kLong);
    b.attention_mask = torch::zeros({n, src_len}, torch::kBool);
    b.decoder_input_ids = torch::full({n, tgt_len}, Tokenizer::kPad, torch::kLong);
    b.labels = torch::full({n, tgt_len}, Tokenizer::kPad, torch::kLong);
    b.label_mask = torch::zeros({n, tgt_len}, torch::kBool);
    auto ids = b.input_ids.accessor<std::int64_t, 2>();
    auto soft = b.soft_rows.accessor<std::int64_t, 2>();
    auto mask = b.attention_mask.accessor<bool, 2>();
    auto dec = b.decoder_input_ids.accessor<std::int64_t, 2>();
    auto lab = b.labels.accessor<std::int64_t, 2>();
    auto lmask = b.label_mask.accessor<bool, 2>();
    for (std::int64_t i = 0; i < n; ++i) {
        const auto& in = inputs[static_cast<std::size_t>(i)];
        for (std::size_t t = 0; t < in.size(); ++t) {
            ids[i][static_cast<std::int64_t>(t)] = in.token_ids[t];
            mask[i][static_cast<std::int64_t>(t)] = in.attention_mask.empty() || in.attention_mask[t];
        }
        for (auto [pos, row] : in.soft_positions) soft[i][static_cast<std::int64_t>(pos)] = static_cast<std::int64_t>(row);
        const auto& tgt = targets[static_cast<std::size_t>(i)];
        for (std::size_t t = 0; t < tgt.size(); ++t) {
            auto ti = static_cast<std::int64_t>(t);
            dec[i][ti] = t == 0 ? Tokenizer::kBos : tgt[t - 1];
            lab[i][ti] = tgt[t];
            lmask[i][ti] = true;
        }
    }
    return b;
}

torch::Tensor sequence_nll(const torch::Tensor& logits, const torch::Tensor& labels, const torch::Tensor& label_mask) {
    auto logp = torch::log_softmax(logits, -1).gather(-1, labels.unsqueeze(-1)).squeeze(-1);
    return -(logp * label_mask.to(logp.dtype())).sum(-1);
}

ForwardOutput forward_with_prompts(Seq2SeqModel& model, const SoftPromptBank& bank, const Batch& batch) {
    auto embeddings = model->embed_inputs(batch.input_ids, batch.soft_rows, bank->vectors);
    auto memory = model->encode(embeddings, batch.attention_mask);
    ForwardOutput out;
    out.logits = model->decode(batch.decoder_input_ids, memory, batch.attention_mask);
    out.example_losses = sequence_nll(out.logits, batch.labels, batch.label_mask);
    out.loss = out.example_losses.mean();
    return out;
}

ForwardOutput forward_with_prompts(Seq2SeqModel& model, const SoftPromptBank& bank, const ModelInput& input,
                                   const std::vector<TokenId>& target_ids) {
    return forward_with_prompts(model, bank, collate({input}, {target_ids}, model->config, bank->rows()));
}

double multitask_loss(const std::vector<double>& task_losses, std::int64_t num_tasks) {
    require(!task_losses.empty(), "multitask_loss needs at least one task loss");
    require(num_tasks >= 1, "num_tasks must be positive");
    require(static_cast<std::int64_t>(task_losses.size()) <= num_tasks, "more task losses than tasks");
    double sum = 0.0;
    for (double l : task_losses) sum += l;
    return sum / static_cast<double>(num_tasks);
}

torch::Tensor multitask_loss(const std::vector<torch::Tensor>& task_losses, std::int64_t num_tasks) {
    require(!task_losses.empty(), "multitask_loss needs at least one task loss");
    require(num_tasks >= 1, "num_tasks must be positive");
    require(static_cast<std::int64_t>(task_losses.size()) <= num_tasks, "more task losses than tasks");
    return torch::stack(task_losses).sum() / static_cast<double>(num_tasks);
}

}  // namespace titleforge
