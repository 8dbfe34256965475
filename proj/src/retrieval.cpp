#include "kgctx/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "kgctx/error.hpp"
#include "kgctx/text.hpp"

namespace kgctx {

using nlohmann::json;

std::string to_string(SelectionMode mode) {
    return mode == SelectionMode::dynamic ? "dynamic" : "fixed";
}

SelectionMode parse_selection_mode(std::string_view name) {
    if (name == "dynamic") return SelectionMode::dynamic;
    if (name == "fixed") return SelectionMode::fixed;
    throw Error("unknown selection mode: " + std::string(name) + " (expected dynamic or fixed)");
}

// ---------------------------------------------------------------------------
// mask_entities

namespace {

// One character of the normalized question, with the raw byte span it came
// from. Whitespace runs collapse to a single ' '; spaces after '.' emit
// nothing (their bytes are swallowed by the surrounding span).
struct NormChar {
    char c;
    size_t raw_begin;
    size_t raw_end;
};

std::vector<NormChar> normalize_with_spans(std::string_view raw) {
    std::vector<NormChar> out;
    size_t i = 0;
    while (i < raw.size()) {
        unsigned char u = static_cast<unsigned char>(raw[i]);
        if (std::isspace(u)) {
            size_t begin = i;
            while (i < raw.size() && std::isspace(static_cast<unsigned char>(raw[i]))) ++i;
            if (out.empty() || out.back().c == '.') continue; // leading or post-period
            out.push_back({' ', begin, i});
            continue;
        }
        char c = u < 0x80 ? static_cast<char>(std::tolower(u)) : raw[i];
        out.push_back({c, i, i + 1});
        ++i;
    }
    // A trailing collapsed space matches nothing an entity ends with
    // (normalized entities are trimmed), so it can stay.
    return out;
}

std::vector<std::pair<size_t, size_t>> find_blocked_spans(std::string_view raw,
                                                          const std::string& token) {
    std::vector<std::pair<size_t, size_t>> spans;
    if (token.empty()) return spans;
    size_t pos = 0;
    while ((pos = raw.find(token, pos)) != std::string_view::npos) {
        spans.emplace_back(pos, pos + token.size());
        pos += token.size();
    }
    return spans;
}

bool overlaps_blocked(const std::vector<std::pair<size_t, size_t>>& blocked, size_t begin,
                      size_t end) {
    for (const auto& [b, e] : blocked) {
        if (begin < e && b < end) return true;
    }
    return false;
}

} // namespace

std::string mask_entities(std::string_view question, const std::vector<std::string>& entities,
                          const std::string& mask_token) {
    std::vector<std::string> normalized;
    std::unordered_set<std::string> seen;
    for (const auto& entity : entities) {
        std::string norm = normalize_entity(entity);
        if (norm.empty()) continue;
        if (seen.insert(norm).second) normalized.push_back(std::move(norm));
    }
    if (normalized.empty()) return std::string(question);
    std::sort(normalized.begin(), normalized.end(), [](const auto& a, const auto& b) {
        if (a.size() != b.size()) return a.size() > b.size();
        return a < b;
    });

    const std::vector<NormChar> norm = normalize_with_spans(question);
    std::string norm_text(norm.size(), '\0');
    for (size_t i = 0; i < norm.size(); ++i) norm_text[i] = norm[i].c;
    const auto blocked = find_blocked_spans(question, mask_token);

    // Raw byte ranges to replace, in increasing order.
    std::vector<std::pair<size_t, size_t>> matches;
    size_t i = 0;
    while (i < norm.size()) {
        bool matched = false;
        if (!overlaps_blocked(blocked, norm[i].raw_begin, norm[i].raw_end)) {
            for (const auto& entity : normalized) {
                if (entity.size() > norm.size() - i) continue;
                if (norm_text.compare(i, entity.size(), entity) != 0) continue;
                size_t raw_begin = norm[i].raw_begin;
                size_t raw_end = norm[i + entity.size() - 1].raw_end;
                if (overlaps_blocked(blocked, raw_begin, raw_end)) continue;
                matches.emplace_back(raw_begin, raw_end);
                i += entity.size();
                matched = true;
                break;
            }
        }
        if (!matched) ++i;
    }

    std::string out;
    out.reserve(question.size());
    size_t cursor = 0;
    for (const auto& [begin, end] : matches) {
        out += question.substr(cursor, begin - cursor);
        out += mask_token;
        cursor = end;
    }
    out += question.substr(cursor);
    return out;
}

// ---------------------------------------------------------------------------
// Scoring and selection

std::vector<ScoredTriple> score_candidates(const std::string& masked_question,
                                           const std::vector<Candidate>& candidates,
                                           EmbeddingProvider& provider) {
    std::vector<ScoredTriple> out;
    if (candidates.empty()) return out;

    const Embedding question_vec = provider.embed(masked_question);

    std::vector<std::string> texts;
    texts.reserve(candidates.size());
    for (const auto& c : candidates) texts.push_back(serialize_triple(c.triple));

    std::vector<Embedding> vectors;
    try {
        vectors = provider.embed_batch(texts);
    } catch (const TransportError&) {
        throw; // batch-level failure, no single triple to blame
    } catch (const Error&) {
        // Re-run one by one so the error names the offending triple.
        for (size_t i = 0; i < texts.size(); ++i) {
            try {
                provider.embed(texts[i]);
            } catch (const Error& e) {
                throw Error("scoring " + texts[i] + ": " + e.what());
            }
        }
        throw;
    }
    if (vectors.size() != candidates.size())
        throw Error("provider returned " + std::to_string(vectors.size()) + " vectors for " +
                    std::to_string(candidates.size()) + " candidates");

    out.reserve(candidates.size());
    for (size_t i = 0; i < candidates.size(); ++i) {
        double score;
        try {
            score = cosine(question_vec, vectors[i]);
        } catch (const Error& e) {
            throw Error("scoring " + texts[i] + ": " + e.what());
        }
        out.push_back({candidates[i].triple, score, candidates[i].hop});
    }
    return out;
}

namespace {

struct SortKey {
    double score;
    std::string serialization;
    size_t index;
};

std::vector<SortKey> ranked_keys(const std::vector<ScoredTriple>& scored) {
    std::vector<SortKey> keys;
    keys.reserve(scored.size());
    for (size_t i = 0; i < scored.size(); ++i) {
        if (!std::isfinite(scored[i].score))
            throw Error("non-finite score for " + serialize_triple(scored[i].triple));
        keys.push_back({scored[i].score, serialize_triple(scored[i].triple), i});
    }
    std::sort(keys.begin(), keys.end(), [](const SortKey& a, const SortKey& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.serialization < b.serialization;
    });
    return keys;
}

} // namespace

ContextBundle select_context(const std::vector<ScoredTriple>& scored,
                             const RetrievalConfig& config) {
    ContextBundle bundle;
    bundle.config_used = config;
    bundle.candidate_count = scored.size();

    const auto keys = ranked_keys(scored);
    if (config.mode == SelectionMode::dynamic) {
        for (const auto& key : keys) {
            if (key.score >= config.lambda) bundle.selected.push_back(scored[key.index]);
        }
    } else {
        if (config.top_k < 1) throw Error("top_k must be >= 1 in fixed mode");
        size_t take = std::min<size_t>(static_cast<size_t>(config.top_k), keys.size());
        for (size_t i = 0; i < take; ++i) bundle.selected.push_back(scored[keys[i].index]);
    }
    return bundle;
}

ContextBundle retrieve(const KnowledgeGraph& kg, const Query& query,
                       const RetrievalConfig& config, EmbeddingProvider& provider) {
    const auto hop_triples = kg.expand_hops(query.entities, config.hops);
    const std::string masked = mask_entities(query.question, query.entities, config.mask_token);

    std::vector<Candidate> candidates;
    candidates.reserve(hop_triples.size());
    for (const auto& ht : hop_triples) candidates.push_back({kg.triple(ht.ordinal), ht.hop});

    const auto scored = score_candidates(masked, candidates, provider);
    return select_context(scored, config);
}

// ---------------------------------------------------------------------------
// JSONL

std::vector<Query> load_queries_jsonl(std::istream& in) {
    std::vector<Query> queries;
    std::unordered_set<std::string> ids;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& e) {
            throw Error("queries line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
        }
        Query q;
        try {
            if (!obj.contains("id") || !obj.contains("question"))
                throw Error("missing id or question");
            q.id = obj["id"].get<std::string>();
            q.question = obj["question"].get<std::string>();
            if (obj.contains("entities")) q.entities = obj["entities"].get<std::vector<std::string>>();
            if (obj.contains("answer") && !obj["answer"].is_null())
                q.gold_answer = obj["answer"].get<std::string>();
            if (obj.contains("class") && !obj["class"].is_null())
                q.question_class = obj["class"].get<std::string>();
        } catch (const json::exception& e) {
            throw Error("queries line " + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            throw Error("queries line " + std::to_string(line_no) + ": " + e.what());
        }
        if (q.question.empty())
            throw Error("queries line " + std::to_string(line_no) + ": empty question");
        if (!ids.insert(q.id).second)
            throw Error("queries line " + std::to_string(line_no) + ": duplicate id \"" + q.id +
                        "\"");
        queries.push_back(std::move(q));
    }
    return queries;
}

std::vector<Query> load_queries_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open queries file: " + path);
    return load_queries_jsonl(in);
}

json bundle_to_json(const std::string& query_id, const ContextBundle& bundle) {
    json selected = json::array();
    for (const auto& st : bundle.selected) {
        selected.push_back({{"head", st.triple.head},
                            {"relation", st.triple.relation},
                            {"tail", st.triple.tail},
                            {"score", st.score},
                            {"hop", st.hop}});
    }
    return {{"id", query_id},
            {"candidate_count", bundle.candidate_count},
            {"selected", std::move(selected)}};
}

json config_to_json(const RetrievalConfig& config) {
    return {{"lambda", config.lambda},
            {"hops", config.hops},
            {"mode", to_string(config.mode)},
            {"top_k", config.top_k},
            {"mask_token", config.mask_token}};
}

RetrievalConfig config_from_json(const json& obj) {
    RetrievalConfig config;
    try {
        if (obj.contains("lambda")) config.lambda = obj["lambda"].get<double>();
        if (obj.contains("hops")) config.hops = obj["hops"].get<int>();
        if (obj.contains("mode")) config.mode = parse_selection_mode(obj["mode"].get<std::string>());
        if (obj.contains("top_k")) config.top_k = obj["top_k"].get<int>();
        if (obj.contains("mask_token")) config.mask_token = obj["mask_token"].get<std::string>();
    } catch (const json::exception& e) {
        throw Error(std::string("bad retrieval config: ") + e.what());
    }
    if (config.hops < 1) throw Error("bad retrieval config: hops must be >= 1");
    if (config.lambda < -1.0 || config.lambda > 1.0)
        throw Error("bad retrieval config: lambda must be in [-1, 1]");
    if (config.top_k < 1) throw Error("bad retrieval config: top_k must be >= 1");
    return config;
}

} // namespace kgctx
