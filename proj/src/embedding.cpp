#include "kgctx/embedding.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "kgctx/error.hpp"
#include "kgctx/text.hpp"

namespace kgctx {

using nlohmann::json;

double cosine(const Embedding& a, const Embedding& b) {
    if (a.size() != b.size())
        throw Error("cosine: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()) + ")");
    if (a.empty()) throw Error("cosine: empty vectors");
    double dot = 0.0, norm_a = 0.0, norm_b = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        norm_a += a[i] * a[i];
        norm_b += b[i] * b[i];
    }
    if (norm_a == 0.0 || norm_b == 0.0)
        throw Error("cosine: undefined similarity for zero vector");
    return dot / (std::sqrt(norm_a) * std::sqrt(norm_b));
}

void validate_embedding(const Embedding& v, const std::string& what) {
    if (v.empty()) throw Error(what + ": empty vector");
    for (double x : v) {
        if (!std::isfinite(x)) throw Error(what + ": non-finite entry");
    }
}

std::vector<Embedding> EmbeddingProvider::embed_batch(const std::vector<std::string>& texts) {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& text : texts) out.push_back(embed(text));
    return out;
}

// ---------------------------------------------------------------------------
// HashingProvider

namespace {

constexpr uint64_t kProbeSalts[4] = {0x9e3779b97f4a7c15ULL, 0xbf58476d1ce4e5b9ULL,
                                     0x94d049bb133111ebULL, 0xd6e8feb86659fd93ULL};

// splitmix64 finalizer; turns a counter stream into well-mixed bits.
uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

bool is_token_byte(unsigned char c) {
    return std::isalnum(c) != 0 || c >= 0x80;
}

} // namespace

HashingProvider::HashingProvider(size_t dim) : dim_(dim) {
    if (dim_ == 0) throw Error("hash provider dimension must be positive");
}

Embedding HashingProvider::embed(const std::string& text) {
    if (trim(text).empty()) throw Error("cannot embed empty text");
    const std::string lowered = lower_ascii(text);

    Embedding values(dim_, 0.0);
    size_t token_count = 0;
    size_t i = 0;
    while (i < lowered.size()) {
        while (i < lowered.size() && !is_token_byte(static_cast<unsigned char>(lowered[i]))) ++i;
        size_t start = i;
        while (i < lowered.size() && is_token_byte(static_cast<unsigned char>(lowered[i]))) ++i;
        if (i == start) continue;
        std::string_view token(lowered.data() + start, i - start);
        ++token_count;
        for (uint64_t salt : kProbeSalts) {
            uint64_t h = fnv1a64(token, kFnvOffset ^ salt);
            size_t bucket = static_cast<size_t>(h % dim_);
            values[bucket] += (h >> 63) ? -1.0 : 1.0;
        }
    }
    if (token_count == 0) {
        // Punctuation-only input: hash the whole trimmed text as one token.
        for (uint64_t salt : kProbeSalts) {
            uint64_t h = fnv1a64(trim(lowered), kFnvOffset ^ salt);
            values[h % dim_] += (h >> 63) ? -1.0 : 1.0;
        }
    }

    double norm_sq = 0.0;
    for (double x : values) norm_sq += x * x;
    if (norm_sq < 1e-24) {
        // Opposing signs cancelled every bucket; fall back to a dense
        // deterministic fill keyed on the full text.
        uint64_t base = fnv1a64(lowered);
        norm_sq = 0.0;
        for (size_t j = 0; j < dim_; ++j) {
            uint64_t h = mix64(base + j);
            values[j] = static_cast<double>(static_cast<int64_t>(h)) / 9.223372036854775807e18;
            norm_sq += values[j] * values[j];
        }
    }
    const double inv_norm = 1.0 / std::sqrt(norm_sq);
    for (double& x : values) x *= inv_norm;
    return values;
}

// ---------------------------------------------------------------------------
// MapProvider

void MapProvider::insert(std::string key, Embedding vector) {
    validate_embedding(vector, "vector for key \"" + key + "\"");
    if (dim_ == 0) dim_ = vector.size();
    if (vector.size() != dim_)
        throw Error("vector for key \"" + key + "\" has dim " + std::to_string(vector.size()) +
                    ", provider dim is " + std::to_string(dim_));
    table_[std::move(key)] = std::move(vector);
}

MapProvider MapProvider::load_jsonl(std::istream& in) {
    MapProvider provider;
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
            throw Error("vectors line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
        }
        if (!obj.contains("key") || !obj.contains("vector"))
            throw Error("vectors line " + std::to_string(line_no) + ": expected key/vector");
        provider.insert(obj["key"].get<std::string>(), obj["vector"].get<Embedding>());
    }
    return provider;
}

MapProvider MapProvider::load_jsonl_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open vectors file: " + path);
    return load_jsonl(in);
}

Embedding MapProvider::embed(const std::string& text) {
    auto it = table_.find(text);
    if (it == table_.end()) throw Error("unknown key: \"" + text + "\"");
    return it->second;
}

// ---------------------------------------------------------------------------
// RemoteProvider

struct RemoteProvider::Impl {
    httplib::Client client;
    explicit Impl(const std::string& url) : client(url) {}
};

RemoteProvider::RemoteProvider(std::string base_url, size_t batch_size)
    : base_url_(std::move(base_url)), batch_size_(batch_size) {
    if (base_url_.empty()) throw Error("remote provider needs a base URL");
    if (batch_size_ == 0) throw Error("remote batch size must be positive");
    impl_ = std::make_unique<Impl>(base_url_);
    impl_->client.set_connection_timeout(5, 0);
    impl_->client.set_read_timeout(30, 0);
}

RemoteProvider::~RemoteProvider() = default;

size_t RemoteProvider::dim() const {
    std::lock_guard lock(mutex_);
    return dim_;
}

std::vector<Embedding> RemoteProvider::request_chunk(const std::vector<std::string>& texts) {
    json body;
    body["texts"] = texts;
    auto res = impl_->client.Post("/embed", body.dump(), "application/json");
    if (!res)
        throw TransportError("embedding service unreachable at " + base_url_ + ": " +
                             httplib::to_string(res.error()));
    if (res->status != 200)
        throw TransportError("embedding service returned status " + std::to_string(res->status));

    json reply;
    try {
        reply = json::parse(res->body);
    } catch (const json::exception& e) {
        throw Error(std::string("embedding service sent invalid JSON: ") + e.what());
    }
    if (!reply.contains("vectors") || !reply["vectors"].is_array())
        throw Error("embedding service reply missing vectors array");
    auto vectors = reply["vectors"].get<std::vector<Embedding>>();
    if (vectors.size() != texts.size())
        throw Error("embedding service returned " + std::to_string(vectors.size()) +
                    " vectors for " + std::to_string(texts.size()) + " texts");
    for (const auto& v : vectors) {
        validate_embedding(v, "remote vector");
        if (dim_ == 0) dim_ = v.size();
        if (v.size() != dim_)
            throw Error("embedding service changed dimension mid-stream");
    }
    return vectors;
}

std::vector<Embedding> RemoteProvider::embed_batch(const std::vector<std::string>& texts) {
    std::lock_guard lock(mutex_);
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (size_t start = 0; start < texts.size(); start += batch_size_) {
        size_t end = std::min(texts.size(), start + batch_size_);
        std::vector<std::string> chunk(texts.begin() + static_cast<ptrdiff_t>(start),
                                       texts.begin() + static_cast<ptrdiff_t>(end));
        auto vectors = request_chunk(chunk);
        for (auto& v : vectors) out.push_back(std::move(v));
    }
    return out;
}

Embedding RemoteProvider::embed(const std::string& text) {
    return embed_batch({text}).front();
}

// ---------------------------------------------------------------------------
// CachingProvider

Embedding CachingProvider::embed(const std::string& text) {
    {
        std::lock_guard lock(mutex_);
        auto it = cache_.find(text);
        if (it != cache_.end()) return it->second;
    }
    Embedding v = inner_.embed(text);
    std::lock_guard lock(mutex_);
    return cache_.emplace(text, std::move(v)).first->second;
}

size_t CachingProvider::cache_size() const {
    std::lock_guard lock(mutex_);
    return cache_.size();
}

// ---------------------------------------------------------------------------

std::unique_ptr<EmbeddingProvider> make_provider(const std::string& descriptor) {
    if (descriptor == "hash") return std::make_unique<HashingProvider>();
    if (descriptor.starts_with("hash:")) {
        size_t dim = 0;
        try {
            dim = std::stoul(descriptor.substr(5));
        } catch (const std::exception&) {
            throw Error("bad hash provider dimension in descriptor: " + descriptor);
        }
        return std::make_unique<HashingProvider>(dim);
    }
    if (descriptor.starts_with("file:")) {
        return std::make_unique<MapProvider>(MapProvider::load_jsonl_file(descriptor.substr(5)));
    }
    if (descriptor.starts_with("remote:"))
        return std::make_unique<RemoteProvider>(descriptor.substr(7));
    if (descriptor == "remote") {
        const char* url = std::getenv("KGCTX_EMBED_URL");
        if (!url || !*url)
            throw Error("provider \"remote\" needs KGCTX_EMBED_URL or an explicit remote:<url>");
        return std::make_unique<RemoteProvider>(url);
    }
    throw Error("unknown provider descriptor: " + descriptor +
                " (expected hash[:dim], file:<path>, remote[:<url>])");
}

} // namespace kgctx
