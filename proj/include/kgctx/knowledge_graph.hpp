#pragma once
#include <cstdint>
#include <istream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kgctx/triple.hpp"

namespace kgctx {

enum class TripleFormat { tsv, jsonl };

TripleFormat parse_triple_format(std::string_view name); // "tsv" | "jsonl"

// A triple found by multi-hop expansion, tagged with the hop (1-based) at
// which it was first reached.
struct HopTriple {
    uint32_t ordinal;
    int hop;

    bool operator==(const HopTriple&) const = default;
};

// Immutable indexed triple collection. Built once by ingest(); afterwards
// safe for unlimited concurrent readers. Ordinals follow first-occurrence
// order in the source; exact duplicates (under entity normalization of all
// three fields) are dropped and counted.
class KnowledgeGraph {
public:
    static KnowledgeGraph ingest(std::istream& in, TripleFormat format);
    static KnowledgeGraph ingest_file(const std::string& path, TripleFormat format);

    const std::vector<Triple>& triples() const { return triples_; }
    const Triple& triple(uint32_t ordinal) const { return triples_[ordinal]; }
    size_t size() const { return triples_.size(); }
    size_t duplicate_count() const { return duplicate_count_; }
    size_t entity_count() const { return entity_index_.size(); }

    // FNV-1a over the raw ingested bytes; identical bytes => identical digest.
    const std::string& source_digest() const { return source_digest_; }

    // Ordinals of triples whose normalized head or tail equals the label
    // (already-normalized or raw). Empty span for unknown labels.
    std::span<const uint32_t> lookup(std::string_view label) const;

    // Triples whose normalized head or tail is in the entity set.
    // Result sorted by ordinal; empty entity set => empty result.
    std::vector<uint32_t> entity_triple_ordinals(const std::vector<std::string>& entities) const;
    std::vector<Triple> entity_triples(const std::vector<std::string>& entities) const;

    // Frontier expansion: hop 1 touches the given entities, hop i+1 touches
    // every head/tail label seen so far. Union over hops 1..k, each triple
    // tagged with its first hop; sorted by ordinal. Stops early at fixpoint.
    std::vector<HopTriple> expand_hops(const std::vector<std::string>& entities, int k) const;

private:
    std::vector<Triple> triples_;
    std::unordered_map<std::string, std::vector<uint32_t>> entity_index_;
    std::string source_digest_;
    size_t duplicate_count_ = 0;

    void add_triple(Triple t);
    void index_label(const std::string& normalized, uint32_t ordinal);
};

} // namespace kgctx
