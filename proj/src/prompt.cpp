#include "titleforge/prompt.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "titleforge/error.hpp"

namespace titleforge {

std::string_view to_string(TemplateKind kind) {
    switch (kind) {
        case TemplateKind::hard: return "hard";
        case TemplateKind::soft: return "soft";
        case TemplateKind::hybrid: return "hybrid";
    }
    return "?";
}

std::string_view to_string(Modality modality) {
    switch (modality) {
        case Modality::bimodal: return "bimodal";
        case Modality::desc_only: return "desc_only";
        case Modality::code_only: return "code_only";
    }
    return "?";
}

TemplateKind parse_template_kind(std::string_view name) {
    if (name == "hard") return TemplateKind::hard;
    if (name == "soft") return TemplateKind::soft;
    if (name == "hybrid") return TemplateKind::hybrid;
    throw InvalidInput("unknown template kind '" + std::string(name) + "'");
}

Modality parse_modality(std::string_view name) {
    if (name == "bimodal") return Modality::bimodal;
    if (name == "desc_only" || name == "desc") return Modality::desc_only;
    if (name == "code_only" || name == "code") return Modality::code_only;
    throw InvalidInput("unknown modality '" + std::string(name) + "'");
}

const PrefixMap& default_prefixes() {
    static const PrefixMap kPrefixes = {
        {"python", "py:"}, {"java", "java:"}, {"c#", "cs:"}, {"javascript", "js:"}, {"php", "php:"}, {"html", "html:"},
    };
    return kPrefixes;
}

// ---------------------------------------------------------------------------
// Templates

std::size_t PromptTemplate::soft_segment_count() const {
    return static_cast<std::size_t>(std::count_if(segments.begin(), segments.end(), [](const TemplateSegment& s) {
        return s.kind == TemplateSegment::Kind::soft;
    }));
}

bool PromptTemplate::uses_description() const {
    return std::any_of(segments.begin(), segments.end(),
                       [](const TemplateSegment& s) { return s.kind == TemplateSegment::Kind::slot_x; });
}

bool PromptTemplate::uses_code() const {
    return std::any_of(segments.begin(), segments.end(),
                       [](const TemplateSegment& s) { return s.kind == TemplateSegment::Kind::slot_y; });
}

PromptTemplate build_template(TemplateKind kind, Modality modality) {
    using K = TemplateSegment::Kind;
    auto literal = [](std::string_view t) { return TemplateSegment{K::literal, std::string(t), -1}; };
    auto soft = [](std::string_view t) { return TemplateSegment{K::soft, std::string(t), -1}; };

    // Each cue is paired with the slot it introduces.
    TemplateSegment desc_cue, code_cue, instruction;
    switch (kind) {
        case TemplateKind::hard:
            desc_cue = literal(kDescriptionCue);
            code_cue = literal(kCodeCue);
            instruction = literal(kInstruction);
            break;
        case TemplateKind::soft:
            desc_cue = soft(kDescriptionCue);
            code_cue = soft(kCodeCue);
            instruction = soft(kInstruction);
            break;
        case TemplateKind::hybrid:
            desc_cue = literal(kDescriptionCue);
            code_cue = literal(kCodeCue);
            instruction = soft(kInstruction);
            break;
    }

    PromptTemplate t;
    t.kind = kind;
    t.modality = modality;
    if (modality != Modality::code_only) {
        t.segments.push_back(desc_cue);
        t.segments.push_back(TemplateSegment{K::slot_x, "", -1});
    }
    if (modality != Modality::desc_only) {
        t.segments.push_back(code_cue);
        t.segments.push_back(TemplateSegment{K::slot_y, "", -1});
    }
    t.segments.push_back(instruction);
    t.segments.push_back(TemplateSegment{K::slot_z, "", -1});

    int next_soft = 0;
    for (auto& s : t.segments) {
        if (s.kind == K::soft) s.soft_index = next_soft++;
    }
    return t;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

const PrefixMap& prefixes_of(const RenderOptions& options) {
    return options.prefixes ? *options.prefixes : default_prefixes();
}

std::vector<TokenId> prefix_tokens(const Quadruplet& quad, const Tokenizer& tokenizer, const PrefixMap& prefixes) {
    auto it = prefixes.find(quad.lang);
    if (it == prefixes.end()) {
        throw InvalidInput("no task prefix registered for language '" + quad.lang + "'");
    }
    return tokenizer.encode(it->second);
}

// Tail-truncates description and code so that together they fit `budget`, in proportion to
// their lengths.
std::pair<std::size_t, std::size_t> share_budget(std::size_t desc_len, std::size_t code_len, std::size_t budget) {
    if (desc_len + code_len <= budget) return {desc_len, code_len};
    std::size_t desc_keep = budget * desc_len / (desc_len + code_len);
    return {desc_keep, budget - desc_keep};
}

struct Part {
    enum class Role { fixed, soft, description, code } role;
    std::vector<TokenId> ids;
    int soft_index = -1;
};

ModelInput assemble(std::vector<Part> parts, std::size_t max_len, const std::vector<std::size_t>& soft_offsets) {
    std::size_t reserved = 1;  // </s>
    std::size_t desc_len = 0, code_len = 0;
    for (const auto& p : parts) {
        if (p.role == Part::Role::description) desc_len += p.ids.size();
        else if (p.role == Part::Role::code) code_len += p.ids.size();
        else reserved += p.ids.size();
    }
    if (reserved > max_len) {
        throw InvalidInput("prompt scaffold (" + std::to_string(reserved) + " tokens) exceeds max length " +
                           std::to_string(max_len));
    }
    auto [desc_keep, code_keep] = share_budget(desc_len, code_len, max_len - reserved);

    ModelInput input;
    for (auto& p : parts) {
        std::size_t keep = p.ids.size();
        if (p.role == Part::Role::description) keep = desc_keep;
        if (p.role == Part::Role::code) keep = code_keep;
        for (std::size_t i = 0; i < keep; ++i) {
            if (p.role == Part::Role::soft) {
                input.soft_positions.emplace(input.token_ids.size(),
                                             soft_offsets[static_cast<std::size_t>(p.soft_index)] + i);
            }
            input.token_ids.push_back(p.ids[i]);
        }
    }
    input.token_ids.push_back(Tokenizer::kEos);
    input.attention_mask.assign(input.token_ids.size(), true);
    return input;
}

}  // namespace

std::vector<SoftInit> soft_init_spec(const PromptTemplate& tmpl, const Tokenizer& tokenizer) {
    std::vector<SoftInit> spec;
    for (const auto& s : tmpl.segments) {
        if (s.kind != TemplateSegment::Kind::soft) continue;
        spec.push_back(SoftInit{s.soft_index, s.text.empty() ? std::vector<TokenId>{} : tokenizer.encode(s.text, true)});
    }
    return spec;
}

std::size_t soft_row_count(const PromptTemplate& tmpl, const Tokenizer& tokenizer) {
    std::size_t rows = 0;
    for (const auto& init : soft_init_spec(tmpl, tokenizer)) rows += init.width();
    return rows;
}

ModelInput render(const PromptTemplate& tmpl, const Quadruplet& quad, const Tokenizer& tokenizer,
                  const RenderOptions& options) {
    bool has_desc = tmpl.uses_description() && !quad.description.empty();
    bool has_code = tmpl.uses_code() && !quad.code.empty();
    if (!has_desc && !has_code) {
        throw InvalidInput("no input modality");
    }
    using K = TemplateSegment::Kind;
    auto init = soft_init_spec(tmpl, tokenizer);
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const auto& s : init) {
        offsets.push_back(offset);
        offset += s.width();
    }

    std::vector<Part> parts;
    parts.push_back(Part{Part::Role::fixed, prefix_tokens(quad, tokenizer, prefixes_of(options))});
    for (const auto& seg : tmpl.segments) {
        switch (seg.kind) {
            case K::literal:
                parts.push_back(Part{Part::Role::fixed, tokenizer.encode(seg.text, true)});
                break;
            case K::soft: {
                auto width = init[static_cast<std::size_t>(seg.soft_index)].width();
                parts.push_back(Part{Part::Role::soft, std::vector<TokenId>(width, Tokenizer::kSoft), seg.soft_index});
                break;
            }
            case K::slot_x:
                parts.push_back(Part{Part::Role::description, tokenizer.encode(quad.description, true)});
                break;
            case K::slot_y:
                parts.push_back(Part{Part::Role::code, tokenizer.encode(quad.code, true)});
                break;
            case K::slot_z:
                break;  // filled by the decoder
        }
    }
    return assemble(std::move(parts), options.max_len, offsets);
}

ModelInput render_finetune(const Quadruplet& quad, const Tokenizer& tokenizer, const RenderOptions& options) {
    if (quad.description.empty() && quad.code.empty()) {
        throw InvalidInput("no input modality");
    }
    std::vector<Part> parts;
    parts.push_back(Part{Part::Role::fixed, prefix_tokens(quad, tokenizer, prefixes_of(options))});
    parts.push_back(Part{Part::Role::description, tokenizer.encode(quad.description, true)});
    parts.push_back(Part{Part::Role::fixed, {Tokenizer::kCode}});
    parts.push_back(Part{Part::Role::code, tokenizer.encode(quad.code, true)});
    return assemble(std::move(parts), options.max_len, {});
}

std::vector<TokenId> encode_target(std::string_view title, const Tokenizer& tokenizer, std::size_t max_len) {
    if (max_len == 0) throw InvalidInput("target length must be positive");
    auto ids = tokenizer.encode(title);
    if (ids.size() > max_len - 1) ids.resize(max_len - 1);
    ids.push_back(Tokenizer::kEos);
    return ids;
}

// ---------------------------------------------------------------------------
// Config

ModelInput PromptConfig::render(const Quadruplet& quad, const Tokenizer& tokenizer) const {
    RenderOptions options{max_source_length, &prefixes};
    if (!finetune) {
        return titleforge::render(make_template(), quad, tokenizer, options);
    }
    Quadruplet view = quad;
    if (modality == Modality::desc_only) view.code.clear();
    if (modality == Modality::code_only) view.description.clear();
    return render_finetune(view, tokenizer, options);
}

std::string PromptConfig::to_json() const {
    nlohmann::ordered_json j;
    j["layout"] = finetune ? "finetune" : "prompt";
    j["template"] = std::string(to_string(kind));
    j["modality"] = std::string(to_string(modality));
    j["max_source_length"] = max_source_length;
    j["max_target_length"] = max_target_length;
    j["prefixes"] = prefixes;
    return j.dump(2);
}

PromptConfig PromptConfig::from_json(std::string_view text) {
    PromptConfig c;
    try {
        auto j = nlohmann::json::parse(text);
        auto layout = j.value("layout", std::string("prompt"));
        if (layout != "prompt" && layout != "finetune") throw InvalidInput("unknown layout '" + layout + "'");
        c.finetune = layout == "finetune";
        c.kind = parse_template_kind(j.value("template", std::string("hybrid")));
        c.modality = parse_modality(j.value("modality", std::string("bimodal")));
        c.max_source_length = j.value("max_source_length", c.max_source_length);
        c.max_target_length = j.value("max_target_length", c.max_target_length);
        if (j.contains("prefixes")) {
            for (const auto& [lang, prefix] : j.at("prefixes").items()) {
                c.prefixes[lang] = prefix.get<std::string>();
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("bad prompt config: ") + e.what());
    }
    std::map<std::string, std::string> seen;
    for (const auto& [lang, prefix] : c.prefixes) {
        if (!seen.emplace(prefix, lang).second) {
            throw InvalidInput("prefix '" + prefix + "' is shared by '" + seen[prefix] + "' and '" + lang + "'");
        }
    }
    return c;
}

PromptConfig PromptConfig::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open prompt config " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json(buf.str());
}

}  // namespace titleforge
