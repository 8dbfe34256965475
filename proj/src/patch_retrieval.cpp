#include "kgctx/patch_retrieval.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "kgctx/error.hpp"
#include "kgctx/text.hpp"

namespace kgctx {

using nlohmann::json;

std::string to_string(RegionSource source) {
    return source == RegionSource::quadrant ? "quadrant" : "bounding-box";
}

RegionSource parse_region_source(std::string_view name) {
    if (name == "quadrant") return RegionSource::quadrant;
    if (name == "bounding-box") return RegionSource::bounding_box;
    throw Error("unknown region source: " + std::string(name));
}

std::array<Region, 4> split_quadrants(int width, int height) {
    if (width < 2 || height < 2)
        throw Error("cannot split a " + std::to_string(width) + "x" + std::to_string(height) +
                    " image into quadrants");
    const int mid_x = width / 2;
    const int mid_y = height / 2;
    const auto q = RegionSource::quadrant;
    return {Region{0, 0, mid_x, mid_y, q}, Region{mid_x, 0, width - mid_x, mid_y, q},
            Region{0, mid_y, mid_x, height - mid_y, q},
            Region{mid_x, mid_y, width - mid_x, height - mid_y, q}};
}

std::vector<ScoredTriple> region_candidates(const ImageDescriptor& image,
                                            const std::vector<Triple>& triples,
                                            EmbeddingProvider& triple_provider, double lambda) {
    if (image.patch_embeddings.empty())
        throw Error("image embeddings required for image \"" + image.id + "\"");

    std::vector<std::string> texts;
    texts.reserve(triples.size());
    for (const auto& t : triples) texts.push_back(serialize_triple(t));
    const auto triple_vectors = triple_provider.embed_batch(texts);

    // serialization -> (index, max score over regions); map keeps the
    // result independent of region enumeration order.
    std::map<std::string, std::pair<size_t, double>> best;
    for (const auto& [region, region_vec] : image.patch_embeddings) {
        for (size_t i = 0; i < triples.size(); ++i) {
            const double score = cosine(region_vec, triple_vectors[i]);
            if (score < lambda) continue;
            auto [it, inserted] = best.try_emplace(texts[i], i, score);
            if (!inserted && score > it->second.second) it->second.second = score;
        }
    }

    std::vector<ScoredTriple> out;
    out.reserve(best.size());
    for (const auto& [text, entry] : best) out.push_back({triples[entry.first], entry.second, 1});
    std::sort(out.begin(), out.end(), [](const ScoredTriple& a, const ScoredTriple& b) {
        if (a.score != b.score) return a.score > b.score;
        return serialize_triple(a.triple) < serialize_triple(b.triple);
    });
    return out;
}

namespace {

Region region_from_json(const json& obj, const ImageDescriptor& image, size_t line_no) {
    Region r;
    try {
        r.x = obj.at("x").get<int>();
        r.y = obj.at("y").get<int>();
        r.w = obj.at("w").get<int>();
        r.h = obj.at("h").get<int>();
        if (obj.contains("source")) r.source = parse_region_source(obj["source"].get<std::string>());
    } catch (const json::exception& e) {
        throw Error("images line " + std::to_string(line_no) + ": " + e.what());
    }
    if (r.w <= 0 || r.h <= 0 || r.x < 0 || r.y < 0 || r.x + r.w > image.width ||
        r.y + r.h > image.height)
        throw Error("images line " + std::to_string(line_no) + ": region (" + std::to_string(r.x) +
                    "," + std::to_string(r.y) + "," + std::to_string(r.w) + "," +
                    std::to_string(r.h) + ") outside " + std::to_string(image.width) + "x" +
                    std::to_string(image.height) + " image \"" + image.id + "\"");
    return r;
}

} // namespace

std::vector<ImageDescriptor> load_image_embeddings_jsonl(std::istream& in) {
    std::vector<ImageDescriptor> images;
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
            throw Error("images line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
        }
        ImageDescriptor image;
        try {
            image.id = obj.at("image_id").get<std::string>();
            image.width = obj.at("width").get<int>();
            image.height = obj.at("height").get<int>();
        } catch (const json::exception& e) {
            throw Error("images line " + std::to_string(line_no) + ": " + e.what());
        }
        if (image.width <= 0 || image.height <= 0)
            throw Error("images line " + std::to_string(line_no) + ": non-positive image size");
        if (obj.contains("regions")) {
            for (const auto& region_obj : obj["regions"]) {
                Region r = region_from_json(region_obj, image, line_no);
                if (!region_obj.contains("vector"))
                    throw Error("images line " + std::to_string(line_no) + ": region missing vector");
                Embedding v;
                try {
                    v = region_obj["vector"].get<Embedding>();
                } catch (const json::exception& e) {
                    throw Error("images line " + std::to_string(line_no) + ": " + e.what());
                }
                validate_embedding(v, "region vector for image \"" + image.id + "\"");
                image.patch_embeddings.emplace_back(r, std::move(v));
            }
        }
        images.push_back(std::move(image));
    }
    return images;
}

std::vector<ImageDescriptor> load_image_embeddings_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open image embeddings file: " + path);
    return load_image_embeddings_jsonl(in);
}

} // namespace kgctx
