#include "kgctx/knowledge_graph.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "kgctx/error.hpp"
#include "kgctx/text.hpp"

namespace kgctx {

using nlohmann::json;

TripleFormat parse_triple_format(std::string_view name) {
    if (name == "tsv") return TripleFormat::tsv;
    if (name == "jsonl") return TripleFormat::jsonl;
    throw Error("unknown triple format: " + std::string(name) + " (expected tsv or jsonl)");
}

namespace {

Triple parse_tsv_line(const std::string& line, size_t line_no) {
    std::vector<std::string_view> fields;
    size_t start = 0;
    std::string_view view(line);
    while (true) {
        size_t tab = view.find('\t', start);
        if (tab == std::string_view::npos) {
            fields.push_back(view.substr(start));
            break;
        }
        fields.push_back(view.substr(start, tab - start));
        start = tab + 1;
    }
    if (fields.size() != 3)
        throw Error("line " + std::to_string(line_no) + ": expected 3 tab-separated fields, got " +
                    std::to_string(fields.size()));
    try {
        return make_triple(fields[0], fields[1], fields[2]);
    } catch (const Error& e) {
        throw Error("line " + std::to_string(line_no) + ": " + e.what());
    }
}

Triple parse_jsonl_line(const std::string& line, size_t line_no) {
    json obj;
    try {
        obj = json::parse(line);
    } catch (const json::exception& e) {
        throw Error("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    if (!obj.is_object() || !obj.contains("head") || !obj.contains("relation") ||
        !obj.contains("tail"))
        throw Error("line " + std::to_string(line_no) +
                    ": expected object with head/relation/tail keys");
    try {
        return make_triple(obj["head"].get<std::string>(), obj["relation"].get<std::string>(),
                           obj["tail"].get<std::string>());
    } catch (const json::exception& e) {
        throw Error("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
        throw Error("line " + std::to_string(line_no) + ": " + e.what());
    }
}

} // namespace

void KnowledgeGraph::index_label(const std::string& normalized, uint32_t ordinal) {
    auto& ordinals = entity_index_[normalized];
    if (!ordinals.empty() && ordinals.back() == ordinal) return; // head == tail
    ordinals.push_back(ordinal);
}

void KnowledgeGraph::add_triple(Triple t) {
    uint32_t ordinal = static_cast<uint32_t>(triples_.size());
    index_label(normalize_entity(t.head), ordinal);
    index_label(normalize_entity(t.tail), ordinal);
    triples_.push_back(std::move(t));
}

KnowledgeGraph KnowledgeGraph::ingest(std::istream& in, TripleFormat format) {
    std::ostringstream buffer;
    buffer << in.rdbuf();
    const std::string bytes = buffer.str();

    KnowledgeGraph kg;
    kg.source_digest_ = hex64(fnv1a64(bytes));

    std::unordered_set<std::string> seen;
    std::istringstream lines(bytes);
    std::string line;
    size_t line_no = 0;
    while (std::getline(lines, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        if (format == TripleFormat::tsv && line.front() == '#') continue;
        Triple t = format == TripleFormat::tsv ? parse_tsv_line(line, line_no)
                                               : parse_jsonl_line(line, line_no);
        if (!seen.insert(triple_dedup_key(t)).second) {
            ++kg.duplicate_count_;
            continue;
        }
        kg.add_triple(std::move(t));
    }
    if (kg.triples_.empty()) throw Error("empty knowledge base");
    return kg;
}

KnowledgeGraph KnowledgeGraph::ingest_file(const std::string& path, TripleFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open triples file: " + path);
    return ingest(in, format);
}

std::span<const uint32_t> KnowledgeGraph::lookup(std::string_view label) const {
    auto it = entity_index_.find(normalize_entity(label));
    if (it == entity_index_.end()) return {};
    return it->second;
}

std::vector<uint32_t> KnowledgeGraph::entity_triple_ordinals(
    const std::vector<std::string>& entities) const {
    std::vector<uint32_t> out;
    for (const auto& entity : entities) {
        auto ordinals = lookup(entity);
        out.insert(out.end(), ordinals.begin(), ordinals.end());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<Triple> KnowledgeGraph::entity_triples(const std::vector<std::string>& entities) const {
    std::vector<Triple> out;
    for (uint32_t ordinal : entity_triple_ordinals(entities)) out.push_back(triples_[ordinal]);
    return out;
}

std::vector<HopTriple> KnowledgeGraph::expand_hops(const std::vector<std::string>& entities,
                                                   int k) const {
    if (k < 1) throw Error("hop count must be >= 1");

    std::vector<HopTriple> found;
    std::vector<bool> reached(triples_.size(), false);
    std::unordered_set<std::string> seen_labels;
    std::vector<std::string> frontier;
    for (const auto& entity : entities) {
        std::string norm = normalize_entity(entity);
        if (norm.empty()) continue;
        if (seen_labels.insert(norm).second) frontier.push_back(std::move(norm));
    }

    for (int hop = 1; hop <= k && !frontier.empty(); ++hop) {
        std::vector<uint32_t> new_ordinals;
        for (const auto& label : frontier) {
            auto it = entity_index_.find(label);
            if (it == entity_index_.end()) continue;
            for (uint32_t ordinal : it->second) {
                if (reached[ordinal]) continue;
                reached[ordinal] = true;
                new_ordinals.push_back(ordinal);
                found.push_back({ordinal, hop});
            }
        }
        frontier.clear();
        for (uint32_t ordinal : new_ordinals) {
            const Triple& t = triples_[ordinal];
            for (std::string norm : {normalize_entity(t.head), normalize_entity(t.tail)}) {
                if (seen_labels.insert(norm).second) frontier.push_back(std::move(norm));
            }
        }
    }

    std::sort(found.begin(), found.end(),
              [](const HopTriple& a, const HopTriple& b) { return a.ordinal < b.ordinal; });
    return found;
}

} // namespace kgctx
