#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "titleforge/corpus.hpp"
#include "titleforge/tokenizer.hpp"

namespace titleforge {

enum class TemplateKind { hard, soft, hybrid };
enum class Modality { bimodal, desc_only, code_only };

std::string_view to_string(TemplateKind kind);
std::string_view to_string(Modality modality);
TemplateKind parse_template_kind(std::string_view name);
Modality parse_modality(std::string_view name);  // accepts "desc"/"code" shorthands

// Literal phrases of the hard template.
inline constexpr std::string_view kDescriptionCue = "The problem description:";
inline constexpr std::string_view kCodeCue = "The code snippet:";
inline constexpr std::string_view kInstruction = "Generate the question title:";

struct TemplateSegment {
    enum class Kind { literal, slot_x, slot_y, slot_z, soft };

    Kind kind = Kind::literal;
    // Literal text, or the initialization phrase of a soft segment (empty = random init).
    std::string text;
    // Sequential index of soft segments within their template; -1 otherwise.
    int soft_index = -1;

    bool operator==(const TemplateSegment&) const = default;
};

struct PromptTemplate {
    TemplateKind kind = TemplateKind::hybrid;
    Modality modality = Modality::bimodal;
    std::vector<TemplateSegment> segments;

    std::size_t soft_segment_count() const;
    bool uses_description() const;
    bool uses_code() const;
};

// hard:   "The problem description:" [X] "The code snippet:" [Y] "Generate the question title:" [Z]
// soft:   [SOFT] [X] [SOFT] [Y] [SOFT] [Z]
// hybrid: "The problem description:" [X] "The code snippet:" [Y] [SOFT] [Z]
// desc_only removes [Y] together with the segment in front of it; code_only does the same for [X].
PromptTemplate build_template(TemplateKind kind, Modality modality = Modality::bimodal);

// Task prefixes keyed by language tag.
using PrefixMap = std::map<std::string, std::string>;
const PrefixMap& default_prefixes();

// Encoder input. Positions listed in soft_positions hold Tokenizer::kSoft and take their
// embedding from the given soft-prompt row.
struct ModelInput {
    std::vector<TokenId> token_ids;
    std::map<std::size_t, std::size_t> soft_positions;
    std::vector<bool> attention_mask;

    std::size_t size() const { return token_ids.size(); }
};

struct RenderOptions {
    std::size_t max_len = 512;
    const PrefixMap* prefixes = nullptr;  // null = default_prefixes()
};

// [LANG] prefix followed by the template with [X] <- description and [Y] <- code, then </s>.
// Soft segments expand to one placeholder per token of their init phrase (at least one).
// Over-long inputs are cut to exactly max_len: prefix, literal and soft positions are kept,
// and the remaining budget is shared by description and code in proportion to their length,
// each cut from the tail.
ModelInput render(const PromptTemplate& tmpl, const Quadruplet& quad, const Tokenizer& tokenizer,
                  const RenderOptions& options = {});

// Fine-tuning layout without prompts: [LANG] description <code> code </s>.
ModelInput render_finetune(const Quadruplet& quad, const Tokenizer& tokenizer, const RenderOptions& options = {});

struct SoftInit {
    int soft_index = 0;
    std::vector<TokenId> init_token_ids;  // empty = random initialization, width 1
    bool random_init() const { return init_token_ids.empty(); }
    std::size_t width() const { return random_init() ? 1 : init_token_ids.size(); }
};

std::vector<SoftInit> soft_init_spec(const PromptTemplate& tmpl, const Tokenizer& tokenizer);

// Total number of soft-prompt rows a template needs.
std::size_t soft_row_count(const PromptTemplate& tmpl, const Tokenizer& tokenizer);

// Decoder target: title tokens followed by </s>, at most max_len tokens in total.
std::vector<TokenId> encode_target(std::string_view title, const Tokenizer& tokenizer, std::size_t max_len = 64);

// Settings of the input layout, persisted with a model and readable from a key-value JSON file:
// {"layout": "prompt"|"finetune", "template": "hybrid", "modality": "bimodal",
//  "max_source_length": 512, "max_target_length": 64, "prefixes": {"python": "py:"}}
struct PromptConfig {
    bool finetune = false;
    TemplateKind kind = TemplateKind::hybrid;
    Modality modality = Modality::bimodal;
    std::size_t max_source_length = 512;
    std::size_t max_target_length = 64;
    PrefixMap prefixes = default_prefixes();

    PromptTemplate make_template() const { return build_template(kind, modality); }
    ModelInput render(const Quadruplet& quad, const Tokenizer& tokenizer) const;

    std::string to_json() const;
    static PromptConfig from_json(std::string_view json);
    static PromptConfig load(const std::string& path);
};

}  // namespace titleforge
