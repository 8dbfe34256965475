#pragma once
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgctx/embedding.hpp"
#include "kgctx/knowledge_graph.hpp"
#include "kgctx/triple.hpp"

namespace kgctx {

// A question with the named entities recognized for its image, plus
// optional gold answer and question class for evaluation.
struct Query {
    std::string id;
    std::string question;
    std::vector<std::string> entities;
    std::optional<std::string> gold_answer;
    std::optional<std::string> question_class;
};

enum class SelectionMode { dynamic, fixed };

std::string to_string(SelectionMode mode);
SelectionMode parse_selection_mode(std::string_view name);

// Defaults follow the paper's best setting: threshold 0.8, 2-hop, dynamic.
// top_k applies only in fixed mode, lambda only in dynamic mode.
struct RetrievalConfig {
    double lambda = 0.8;
    int hops = 2;
    SelectionMode mode = SelectionMode::dynamic;
    int top_k = 5;
    std::string mask_token = "<MASK>";
};

struct Candidate {
    Triple triple;
    int hop = 1;
};

struct ScoredTriple {
    Triple triple;
    double score = 0.0;
    int hop = 1;

    bool operator==(const ScoredTriple&) const = default;
};

// Selection result: triples ordered by score descending, ties broken by
// ascending triple serialization, so the ordering is total and the
// serialized output is byte-deterministic.
struct ContextBundle {
    std::vector<ScoredTriple> selected;
    RetrievalConfig config_used;
    size_t candidate_count = 0;
};

// Replaces every occurrence of each entity with mask_token. Matching runs
// in normalized space (case-, whitespace-, and "X. Y"/"X.Y"-insensitive),
// longest entity first, left to right. Existing mask_token spans are never
// re-masked, which makes the operation idempotent.
std::string mask_entities(std::string_view question, const std::vector<std::string>& entities,
                          const std::string& mask_token);

// Scores each candidate by cosine(embed(masked question), embed("(h, r, t)")).
// Input order preserved. Provider errors are annotated with the offending
// triple; transport errors pass through untouched.
std::vector<ScoredTriple> score_candidates(const std::string& masked_question,
                                           const std::vector<Candidate>& candidates,
                                           EmbeddingProvider& provider);

// Dynamic mode keeps every triple with score >= lambda (boundary inclusive);
// fixed mode keeps the top_k best. candidate_count records the pool size
// before selection.
ContextBundle select_context(const std::vector<ScoredTriple>& scored,
                             const RetrievalConfig& config);

// Full pipeline: expand_hops -> mask_entities -> score_candidates ->
// select_context. Pure given an immutable graph and a thread-safe provider.
ContextBundle retrieve(const KnowledgeGraph& kg, const Query& query,
                       const RetrievalConfig& config, EmbeddingProvider& provider);

// Queries JSONL: {"id","question","entities":[..],"answer","class"};
// answer and class optional. Duplicate ids are an error.
std::vector<Query> load_queries_jsonl(std::istream& in);
std::vector<Query> load_queries_file(const std::string& path);

nlohmann::json bundle_to_json(const std::string& query_id, const ContextBundle& bundle);
nlohmann::json config_to_json(const RetrievalConfig& config);
RetrievalConfig config_from_json(const nlohmann::json& obj);

} // namespace kgctx
