#pragma once
#include <cstdint>
#include <istream>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

namespace kgctx {

using Embedding = std::vector<double>;

// Standard cosine similarity in [-1, 1]. Throws Error on dimension mismatch
// or when either vector has zero norm ("undefined similarity").
double cosine(const Embedding& a, const Embedding& b);

// Throws Error if v is empty or contains NaN/Inf. `what` names the vector
// in the message.
void validate_embedding(const Embedding& v, const std::string& what);

// Text-to-vector source. Implementations must be deterministic per instance
// (same text, same vector) and either safe under concurrent embed calls or
// serialize internally; thread_safe() reports which.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    virtual Embedding embed(const std::string& text) = 0;

    // Order-aligned with the input; default implementation loops.
    virtual std::vector<Embedding> embed_batch(const std::vector<std::string>& texts);

    // 0 while still unknown (remote provider before its first response).
    virtual size_t dim() const = 0;

    virtual std::string name() const = 0;
    virtual bool thread_safe() const = 0;
};

// Offline stand-in for a real text encoder: feature-hashed token counts,
// L2-normalized. Each token lands in four salted (bucket, sign) slots so
// distinct short strings almost never share a vector. Pure function of the
// text; no model, no I/O.
class HashingProvider final : public EmbeddingProvider {
public:
    explicit HashingProvider(size_t dim = 256);

    Embedding embed(const std::string& text) override;
    size_t dim() const override { return dim_; }
    std::string name() const override { return "deterministic-hash"; }
    bool thread_safe() const override { return true; }

private:
    size_t dim_;
};

// In-memory key -> vector table; the precomputed-file provider and test
// fixtures build on it. Lookup miss is an error naming the missing key.
class MapProvider final : public EmbeddingProvider {
public:
    MapProvider() = default;

    void insert(std::string key, Embedding vector);

    // JSONL: {"key": "<text>", "vector": [..]} per line.
    static MapProvider load_jsonl(std::istream& in);
    static MapProvider load_jsonl_file(const std::string& path);

    Embedding embed(const std::string& text) override;
    size_t dim() const override { return dim_; }
    size_t size() const { return table_.size(); }
    std::string name() const override { return "precomputed-file"; }
    bool thread_safe() const override { return true; }

private:
    std::unordered_map<std::string, Embedding> table_;
    size_t dim_ = 0;
};

// HTTP client for an embedding service: POST /embed {"texts": [..]} ->
// {"vectors": [[..]]}. Requests are chunked to batch_size and responses
// re-joined in input order. Failures surface as TransportError (retriable).
// Calls are serialized on an internal mutex.
class RemoteProvider final : public EmbeddingProvider {
public:
    explicit RemoteProvider(std::string base_url, size_t batch_size = 64);
    ~RemoteProvider() override;

    Embedding embed(const std::string& text) override;
    std::vector<Embedding> embed_batch(const std::vector<std::string>& texts) override;
    size_t dim() const override;
    std::string name() const override { return "remote-service"; }
    bool thread_safe() const override { return true; }

private:
    std::vector<Embedding> request_chunk(const std::vector<std::string>& texts);

    std::string base_url_;
    size_t batch_size_;
    mutable std::mutex mutex_;
    size_t dim_ = 0;
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Memoizing decorator; non-owning. Makes repeated triple embeddings cheap
// across queries and guarantees same-text-same-vector on top of any inner
// provider.
class CachingProvider final : public EmbeddingProvider {
public:
    explicit CachingProvider(EmbeddingProvider& inner) : inner_(inner) {}

    Embedding embed(const std::string& text) override;
    size_t dim() const override { return inner_.dim(); }
    std::string name() const override { return "cache(" + inner_.name() + ")"; }
    bool thread_safe() const override { return inner_.thread_safe(); }
    size_t cache_size() const;

private:
    EmbeddingProvider& inner_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, Embedding> cache_;
};

// Descriptor forms: "hash", "hash:<dim>", "file:<path>", "remote:<url>",
// "remote" (url from the KGCTX_EMBED_URL environment variable).
std::unique_ptr<EmbeddingProvider> make_provider(const std::string& descriptor);

} // namespace kgctx
