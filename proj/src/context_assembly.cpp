#include "kgctx/context_assembly.hpp"

#include <array>

#include "kgctx/error.hpp"

namespace kgctx {

using nlohmann::json;

namespace {

void reject_sep_in_field(const std::string& field, const std::string& sep_token,
                         const std::string& what) {
    if (field.find(sep_token) != std::string::npos)
        throw Error(what + " contains the separator token \"" + sep_token + "\"");
}

} // namespace

std::string serialize_context(const std::vector<Triple>& triples, const std::string& sep_token) {
    if (sep_token.empty()) throw Error("separator token must be non-empty");
    std::string out;
    for (size_t i = 0; i < triples.size(); ++i) {
        const Triple& t = triples[i];
        reject_sep_in_field(t.head, sep_token, "triple head");
        reject_sep_in_field(t.relation, sep_token, "triple relation");
        reject_sep_in_field(t.tail, sep_token, "triple tail");
        if (i > 0) out += " " + sep_token + " ";
        out += serialize_triple(t);
    }
    return out;
}

std::string serialize_context(const ContextBundle& bundle, const std::string& sep_token) {
    std::vector<Triple> triples;
    triples.reserve(bundle.selected.size());
    for (const auto& st : bundle.selected) triples.push_back(st.triple);
    return serialize_context(triples, sep_token);
}

std::vector<Triple> parse_context(std::string_view context, const std::string& sep_token) {
    if (sep_token.empty()) throw Error("separator token must be non-empty");
    std::vector<Triple> out;
    if (context.empty()) return out;
    const std::string delim = " " + sep_token + " ";
    size_t start = 0;
    while (true) {
        size_t pos = context.find(delim, start);
        std::string_view piece =
            pos == std::string_view::npos ? context.substr(start) : context.substr(start, pos - start);
        out.push_back(parse_triple(piece));
        if (pos == std::string_view::npos) break;
        start = pos + delim.size();
    }
    return out;
}

std::string render_entities(const std::vector<std::string>& entities) {
    std::string out = "[";
    for (size_t i = 0; i < entities.size(); ++i) {
        if (i > 0) out += ", ";
        out += entities[i];
    }
    out += "]";
    return out;
}

AssembledInput assemble_input(const std::string& image_ref, const Query& query,
                              const std::string& context, const std::string& sep_token) {
    if (sep_token.empty()) throw Error("separator token must be non-empty");
    AssembledInput input;
    input.sep_token = sep_token;
    input.segments = {{"image_ref", image_ref},
                      {"question", query.question},
                      {"entities", render_entities(query.entities)},
                      {"context", context}};
    // Only the context segment may legitimately contain the separator.
    for (size_t i = 0; i + 1 < input.segments.size(); ++i)
        reject_sep_in_field(input.segments[i].text, sep_token, input.segments[i].kind + " segment");

    for (size_t i = 0; i < input.segments.size(); ++i) {
        if (i > 0) input.rendered += " " + sep_token + " ";
        input.rendered += input.segments[i].text;
    }
    return input;
}

json assembled_to_json(const std::string& query_id, const AssembledInput& input) {
    json segments = json::array();
    for (const auto& seg : input.segments)
        segments.push_back({{"kind", seg.kind}, {"text", seg.text}});
    return {{"id", query_id}, {"rendered", input.rendered}, {"segments", std::move(segments)}};
}

// ---------------------------------------------------------------------------
// Prompt templates

namespace {

constexpr const char* kPlainBody =
    "Please answer concisely in one or two words:\n"
    "Question: <question>\n"
    "Named Entities: <named entities>\n";

constexpr const char* kKnowledgeBody =
    "Please answer the question concisely in one or two words. We also provide Named Entities "
    "and knowledge triples separated by <sep> token for your assistance:\n"
    "Question: <question>\n"
    "Named Entities: <named entities>\n"
    "Triples: <triples string>\n";

constexpr const char* kSpatialBody =
    "Please answer concisely in one or two words:\n"
    "Question: <question>\n"
    "Named Entities: <named entities>\n"
    "Don’t give named entities in the answer instead provide the answer in form Person in "
    "Center, Person in Left, Person in Right.\n";

} // namespace

PromptTemplate builtin_template(PromptKind kind) {
    switch (kind) {
        case PromptKind::zero_shot_plain: return {"zero-shot-plain", kPlainBody};
        case PromptKind::zero_shot_knowledge: return {"zero-shot-knowledge", kKnowledgeBody};
        case PromptKind::spatial_normalized: return {"spatial-normalized", kSpatialBody};
    }
    throw Error("unknown prompt kind");
}

PromptTemplate builtin_template(std::string_view name) {
    if (name == "zero-shot-plain") return builtin_template(PromptKind::zero_shot_plain);
    if (name == "zero-shot-knowledge") return builtin_template(PromptKind::zero_shot_knowledge);
    if (name == "spatial-normalized") return builtin_template(PromptKind::spatial_normalized);
    throw Error("unknown prompt template: " + std::string(name) +
                " (expected zero-shot-plain, zero-shot-knowledge, or spatial-normalized)");
}

std::string render_prompt(const PromptTemplate& tmpl, const Query& query,
                          const std::optional<std::string>& context) {
    struct Slot {
        std::string_view placeholder;
        bool fillable;
        std::string value;
    };
    const std::array<Slot, 3> slots = {
        Slot{"<question>", true, query.question},
        Slot{"<named entities>", true, render_entities(query.entities)},
        Slot{"<triples string>", context.has_value(), context.value_or("")},
    };

    std::string out;
    std::string_view body = tmpl.body;
    size_t pos = 0;
    while (pos < body.size()) {
        size_t next = std::string_view::npos;
        const Slot* hit = nullptr;
        for (const auto& slot : slots) {
            size_t found = body.find(slot.placeholder, pos);
            if (found < next) {
                next = found;
                hit = &slot;
            }
        }
        if (!hit) {
            out += body.substr(pos);
            break;
        }
        if (!hit->fillable)
            throw Error("unfilled placeholder " + std::string(hit->placeholder) + " in template " +
                        tmpl.name);
        out += body.substr(pos, next - pos);
        out += hit->value;
        pos = next + hit->placeholder.size();
    }
    return out;
}

} // namespace kgctx
