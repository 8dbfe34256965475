#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "kgctx/error.hpp"
#include "kgctx/patch_retrieval.hpp"

using namespace kgctx;

namespace {

ImageDescriptor image_with_patches(std::vector<Embedding> vectors, int width = 100,
                                   int height = 100) {
    ImageDescriptor image;
    image.id = "img";
    image.width = width;
    image.height = height;
    const auto regions = split_quadrants(width, height);
    for (size_t i = 0; i < vectors.size(); ++i)
        image.patch_embeddings.emplace_back(regions[i % 4], std::move(vectors[i]));
    return image;
}

} // namespace

TEST_CASE("split_quadrants") {
    SUBCASE("even split") {
        const auto regions = split_quadrants(640, 480);
        CHECK(regions[0] == Region{0, 0, 320, 240, RegionSource::quadrant});
        CHECK(regions[1] == Region{320, 0, 320, 240, RegionSource::quadrant});
        CHECK(regions[2] == Region{0, 240, 320, 240, RegionSource::quadrant});
        CHECK(regions[3] == Region{320, 240, 320, 240, RegionSource::quadrant});
    }
    SUBCASE("odd width: right side absorbs the remainder") {
        const auto regions = split_quadrants(641, 480);
        CHECK(regions[0].w == 320);
        CHECK(regions[1].w == 321);
        CHECK(regions[2].w == 320);
        CHECK(regions[3].w == 321);
        long area = 0;
        for (const auto& r : regions) area += static_cast<long>(r.w) * r.h;
        CHECK(area == 641L * 480L);
    }
    SUBCASE("degenerate sizes rejected") {
        CHECK_THROWS_AS(split_quadrants(1, 480), Error);
        CHECK_THROWS_AS(split_quadrants(640, 1), Error);
        CHECK_THROWS_AS(split_quadrants(0, 0), Error);
    }
    SUBCASE("disjoint and covering for all sizes up to 50") {
        for (int w = 2; w <= 50; ++w) {
            for (int h = 2; h <= 50; ++h) {
                const auto regions = split_quadrants(w, h);
                long area = 0;
                for (const auto& r : regions) {
                    CHECK(r.x >= 0);
                    CHECK(r.y >= 0);
                    CHECK(r.x + r.w <= w);
                    CHECK(r.y + r.h <= h);
                    CHECK(r.w > 0);
                    CHECK(r.h > 0);
                    area += static_cast<long>(r.w) * r.h;
                }
                CHECK(area == static_cast<long>(w) * h); // disjoint + covering
                for (size_t i = 0; i < 4; ++i) {
                    for (size_t j = i + 1; j < 4; ++j) {
                        const auto& a = regions[i];
                        const auto& b = regions[j];
                        const bool overlap = a.x < b.x + b.w && b.x < a.x + a.w &&
                                             a.y < b.y + b.h && b.y < a.y + a.h;
                        CHECK(!overlap);
                    }
                }
            }
        }
    }
}

TEST_CASE("region_candidates") {
    MapProvider provider;
    const auto add = [&](const Triple& t, Embedding v) {
        provider.insert(serialize_triple(t), std::move(v));
    };

    SUBCASE("max across patches, included once") {
        const Triple t = make_triple("vase", "on", "table");
        add(t, {1, 0});
        // One patch aligned with the triple, three far away.
        auto image = image_with_patches({{0.9, std::sqrt(1 - 0.81)}, {0, 1}, {0, 1}, {0, 1}});
        const auto hits = region_candidates(image, {t}, provider, 0.8);
        REQUIRE(hits.size() == 1);
        CHECK(hits[0].score == doctest::Approx(0.9));
    }
    SUBCASE("nothing reaches lambda") {
        const Triple t = make_triple("a", "r", "b");
        add(t, {1, 0});
        auto image = image_with_patches({{0, 1}, {0, 1}, {0, 1}, {0, 1}});
        CHECK(region_candidates(image, {t}, provider, 0.8).empty());
    }
    SUBCASE("missing embeddings is an error") {
        ImageDescriptor image;
        image.id = "bare";
        image.width = 10;
        image.height = 10;
        CHECK_THROWS_WITH_AS(region_candidates(image, {}, provider, 0.8),
                             doctest::Contains("image embeddings required"), Error);
    }
    SUBCASE("matches the brute-force double loop") {
        std::mt19937_64 rng(53);
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::vector<Triple> triples;
        for (int i = 0; i < 50; ++i) {
            Triple t = make_triple("obj" + std::to_string(i), "near", "thing");
            Embedding v(6);
            for (auto& x : v) x = gauss(rng);
            add(t, v);
            triples.push_back(std::move(t));
        }
        std::vector<Embedding> patches(4, Embedding(6));
        for (auto& p : patches)
            for (auto& x : p) x = gauss(rng);
        auto image = image_with_patches(patches);
        const double lambda = 0.2;

        std::map<std::string, double> expected;
        for (const auto& [region, pv] : image.patch_embeddings) {
            for (const auto& t : triples) {
                const double s = cosine(pv, provider.embed(serialize_triple(t)));
                if (s < lambda) continue;
                auto [it, fresh] = expected.emplace(serialize_triple(t), s);
                if (!fresh) it->second = std::max(it->second, s);
            }
        }
        const auto hits = region_candidates(image, triples, provider, lambda);
        REQUIRE(hits.size() == expected.size());
        for (const auto& st : hits)
            CHECK(st.score == doctest::Approx(expected.at(serialize_triple(st.triple))));

        SUBCASE("region order does not matter") {
            auto shuffled = image;
            std::reverse(shuffled.patch_embeddings.begin(), shuffled.patch_embeddings.end());
            const auto hits2 = region_candidates(shuffled, triples, provider, lambda);
            REQUIRE(hits2.size() == hits.size());
            for (size_t i = 0; i < hits.size(); ++i) CHECK(hits2[i] == hits[i]);
        }
        SUBCASE("adding a region never removes a triple") {
            auto larger = image;
            Embedding extra(6);
            for (auto& x : extra) x = gauss(rng);
            larger.patch_embeddings.emplace_back(Region{0, 0, 10, 10, RegionSource::bounding_box},
                                                 extra);
            const auto hits2 = region_candidates(larger, triples, provider, lambda);
            std::set<std::string> before, after;
            for (const auto& st : hits) before.insert(serialize_triple(st.triple));
            for (const auto& st : hits2) after.insert(serialize_triple(st.triple));
            CHECK(std::includes(after.begin(), after.end(), before.begin(), before.end()));
        }
    }
}

TEST_CASE("image embeddings jsonl") {
    std::istringstream in(
        R"({"image_id":"i1","width":100,"height":80,"regions":[{"x":0,"y":0,"w":50,"h":40,"source":"quadrant","vector":[1,0]}]})"
        "\n");
    const auto images = load_image_embeddings_jsonl(in);
    REQUIRE(images.size() == 1);
    CHECK(images[0].patch_embeddings.size() == 1);
    CHECK(images[0].patch_embeddings[0].first.w == 50);

    SUBCASE("out-of-bounds region rejected") {
        std::istringstream bad(
            R"({"image_id":"i1","width":100,"height":80,"regions":[{"x":60,"y":0,"w":50,"h":40,"vector":[1,0]}]})"
            "\n");
        CHECK_THROWS_WITH_AS(load_image_embeddings_jsonl(bad), doctest::Contains("outside"),
                             Error);
    }
}
