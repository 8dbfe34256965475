#pragma once
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgctx/retrieval.hpp"
#include "kgctx/triple.hpp"

namespace kgctx {

inline constexpr const char* kDefaultSepToken = "<SEP>";

// "(h, r, t) <SEP> (h2, r2, t2)"; empty list renders "". Throws if a triple
// field contains the separator token (ambiguous inputs are rejected, not
// escaped).
std::string serialize_context(const std::vector<Triple>& triples, const std::string& sep_token);
std::string serialize_context(const ContextBundle& bundle, const std::string& sep_token);

// Inverse of serialize_context for well-formed context strings.
std::vector<Triple> parse_context(std::string_view context, const std::string& sep_token);

// Fig.-1-style bracketed list: "[Kangana Ranaut, R. Madhavan]".
std::string render_entities(const std::vector<std::string>& entities);

// The model-facing input sequence, fixed segment order
// image_ref <SEP> question <SEP> entities <SEP> context.
struct AssembledInput {
    struct Segment {
        std::string kind;
        std::string text;
    };
    std::vector<Segment> segments;
    std::string sep_token;
    std::string rendered;
};

AssembledInput assemble_input(const std::string& image_ref, const Query& query,
                              const std::string& context,
                              const std::string& sep_token = kDefaultSepToken);

nlohmann::json assembled_to_json(const std::string& query_id, const AssembledInput& input);

// Placeholders: <question>, <named entities>, <triples string>.
struct PromptTemplate {
    std::string name;
    std::string body;
};

enum class PromptKind { zero_shot_plain, zero_shot_knowledge, spatial_normalized };

PromptTemplate builtin_template(PromptKind kind);
PromptTemplate builtin_template(std::string_view name); // CLI names, e.g. "zero-shot-plain"

// Substitutes placeholders in one left-to-right pass (inserted values are
// never re-scanned). A placeholder with no value to fill — e.g. a triples
// slot when no context was supplied — is an error naming the placeholder.
std::string render_prompt(const PromptTemplate& tmpl, const Query& query,
                          const std::optional<std::string>& context);

} // namespace kgctx
