#pragma once
#include <array>
#include <istream>
#include <string>
#include <vector>

#include "kgctx/embedding.hpp"
#include "kgctx/retrieval.hpp"
#include "kgctx/triple.hpp"

namespace kgctx {

enum class RegionSource { quadrant, bounding_box };

std::string to_string(RegionSource source);
RegionSource parse_region_source(std::string_view name);

// A pixel rectangle inside its parent image: [x, x+w) x [y, y+h).
struct Region {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;
    RegionSource source = RegionSource::quadrant;

    bool operator==(const Region&) const = default;
};

// Image-side retrieval input. Patch/box embeddings are produced upstream
// (by an image encoder) and ingested here; this module never decodes pixels.
struct ImageDescriptor {
    std::string id;
    int width = 0;
    int height = 0;
    std::vector<std::pair<Region, Embedding>> patch_embeddings;
    std::vector<Region> boxes;
};

// Four non-overlapping regions tiling the image, split at floor(w/2) and
// floor(h/2); right/bottom regions absorb odd-pixel remainders. Order:
// top-left, top-right, bottom-left, bottom-right. Throws on w or h < 2.
std::array<Region, 4> split_quadrants(int width, int height);

// Per region, keeps triples with cosine(region embedding, triple embedding)
// >= lambda; unions across regions keeping each triple's maximum score.
// Result sorted by score descending (ties by serialization), hop fixed at 1.
// Requires patch_embeddings; full-image retrieval is the single-region case.
std::vector<ScoredTriple> region_candidates(const ImageDescriptor& image,
                                            const std::vector<Triple>& triples,
                                            EmbeddingProvider& triple_provider, double lambda);

// JSONL: {"image_id","width","height","regions":[{"x","y","w","h","source",
// "vector":[..]}]}. Regions must lie inside the image bounds.
std::vector<ImageDescriptor> load_image_embeddings_jsonl(std::istream& in);
std::vector<ImageDescriptor> load_image_embeddings_file(const std::string& path);

} // namespace kgctx
