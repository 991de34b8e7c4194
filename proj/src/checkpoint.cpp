#include "titleforge/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "titleforge/error.hpp"

namespace titleforge {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kFormat = "titleforge-checkpoint/1";

struct Fnv64 {
    std::uint64_t h = 1469598103934665603ULL;
    void add(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    }
    void add(std::string_view s) {
        add(s.data(), s.size());
        add("\0", 1);
    }
    void add(const torch::Tensor& t) {
        auto c = t.detach().contiguous().cpu();
        add(c.data_ptr(), static_cast<std::size_t>(c.numel()) * c.element_size());
    }
};

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    out.close();
    if (!out) throw Error("cannot write " + path.string());
}

void copy_parameters(torch::nn::Module& to, const torch::nn::Module& from) {
    torch::NoGradGuard guard;
    auto src = from.named_parameters();
    for (auto& p : to.named_parameters()) {
        const auto* s = src.find(p.key());
        if (s == nullptr) throw ManifestMismatch("parameter " + p.key() + " missing");
        p.value().set_data(s->detach().clone());
    }
}

}  // namespace

std::string Checkpoint::model_version() const {
    Fnv64 h;
    h.add(kFormat);
    h.add(config.to_json().dump());
    h.add(prompt.to_json());
    auto fp = tokenizer.fingerprint();
    h.add(&fp, sizeof fp);
    for (const auto& p : model->named_parameters()) {
        h.add(p.key());
        h.add(p.value());
    }
    h.add(bank->vectors);
    return "tf-" + hex(h.h);
}

std::int64_t Checkpoint::expected_bank_rows() const {
    if (prompt.finetune) return 0;
    return static_cast<std::int64_t>(soft_row_count(prompt.make_template(), tokenizer));
}

void Checkpoint::check_consistency() const {
    if (config.vocab_size != static_cast<std::int64_t>(tokenizer.size())) {
        throw ManifestMismatch("model vocabulary has " + std::to_string(config.vocab_size) +
                               " entries but the tokenizer has " + std::to_string(tokenizer.size()));
    }
    if (bank->rows() != expected_bank_rows()) {
        throw ManifestMismatch("soft-prompt bank has " + std::to_string(bank->rows()) + " rows but the " +
                               std::string(prompt.finetune ? "fine-tuning" : to_string(prompt.kind)) +
                               " template needs " + std::to_string(expected_bank_rows()));
    }
    if (bank->vectors.size(1) != config.d_model) {
        throw ManifestMismatch("soft-prompt width differs from d_model");
    }
    if (static_cast<std::int64_t>(prompt.max_source_length) > config.max_encoder_len ||
        static_cast<std::int64_t>(prompt.max_target_length) > config.max_decoder_len) {
        throw ManifestMismatch("prompt lengths exceed the model's maximum sequence lengths");
    }
}

Checkpoint init_checkpoint(const ModelConfig& config, const PromptConfig& prompt, Tokenizer tokenizer,
                           std::vector<std::string> languages, std::uint64_t seed) {
    Checkpoint c;
    c.config = config;
    c.config.vocab_size = static_cast<std::int64_t>(tokenizer.size());
    c.config.validate();
    c.prompt = prompt;
    c.tokenizer = std::move(tokenizer);
    c.languages = std::move(languages);
    torch::manual_seed(seed);
    c.model = make_model(c.config);
    c.bank = prompt.finetune ? make_empty_bank(c.config.d_model) : make_bank(prompt.make_template(), c.tokenizer, c.model);
    c.check_consistency();
    return c;
}

Checkpoint clone_checkpoint(const Checkpoint& ckpt) {
    Checkpoint c;
    c.config = ckpt.config;
    c.prompt = ckpt.prompt;
    c.tokenizer = ckpt.tokenizer;
    c.languages = ckpt.languages;
    c.training = ckpt.training;
    c.model = make_model(c.config);
    copy_parameters(*c.model, *ckpt.model);
    c.model->train(ckpt.model->is_training());
    c.bank = SoftPromptBank(ckpt.bank->rows(), ckpt.config.d_model);
    copy_parameters(*c.bank, *ckpt.bank);
    c.bank->init_source = ckpt.bank->init_source;
    return c;
}

nlohmann::json read_manifest(const std::string& dir) {
    auto path = fs::path(dir) / "manifest.json";
    if (!fs::exists(path)) throw Error("no manifest.json in " + dir);
    try {
        return nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error("malformed manifest " + path.string() + ": " + e.what());
    }
}

void save_checkpoint(const std::string& dir, const Checkpoint& ckpt) {
    ckpt.check_consistency();
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create " + dir + ": " + ec.message());
    auto root = fs::path(dir);
    try {
        torch::save(ckpt.model, (root / "model.pt").string());
        torch::save(ckpt.bank, (root / "bank.pt").string());
    } catch (const c10::Error& e) {
        throw Error("cannot write weights to " + dir + ": " + e.what_without_backtrace());
    }
    write_text(root / "tokenizer.json", ckpt.tokenizer.to_json() + "\n");
    nlohmann::json m;
    m["format"] = kFormat;
    m["model_version"] = ckpt.model_version();
    m["model"] = ckpt.config.to_json();
    m["prompt"] = nlohmann::json::parse(ckpt.prompt.to_json());
    m["tokenizer_fingerprint"] = hex(ckpt.tokenizer.fingerprint());
    m["bank_rows"] = ckpt.bank->rows();
    m["bank_init_source"] = ckpt.bank->init_source;
    m["languages"] = ckpt.languages;
    m["training"] = ckpt.training;
    write_text(root / "manifest.json", m.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& dir) {
    auto m = read_manifest(dir);
    if (m.value("format", "") != kFormat) {
        throw ManifestMismatch("unsupported checkpoint format '" + m.value("format", "") + "' in " + dir);
    }
    auto root = fs::path(dir);
    Checkpoint c;
    try {
        c.config = ModelConfig::from_json(m.at("model"));
        c.prompt = PromptConfig::from_json(m.at("prompt").dump());
        c.languages = m.at("languages").get<std::vector<std::string>>();
        c.training = m.value("training", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw ManifestMismatch("malformed manifest in " + dir + ": " + e.what());
    }
    c.tokenizer = Tokenizer::from_json(read_text(root / "tokenizer.json"));
    if (hex(c.tokenizer.fingerprint()) != m.value("tokenizer_fingerprint", "")) {
        throw ManifestMismatch("tokenizer.json does not match the manifest's vocabulary fingerprint");
    }
    c.model = make_model(c.config);
    auto rows = m.value("bank_rows", std::int64_t{0});
    c.bank = SoftPromptBank(rows, c.config.d_model);
    try {
        torch::load(c.model, (root / "model.pt").string());
        torch::load(c.bank, (root / "bank.pt").string());
    } catch (const c10::Error& e) {
        throw ManifestMismatch("weights in " + dir + " do not match the manifest: " + e.what_without_backtrace());
    }
    c.bank->init_source = m.value("bank_init_source", std::vector<std::int64_t>(static_cast<std::size_t>(rows), -1));
    c.check_consistency();
    if (c.model_version() != m.value("model_version", "")) {
        throw ManifestMismatch("weights in " + dir + " do not match the manifest's model_version");
    }
    c.model->eval();
    return c;
}

}  // namespace titleforge
