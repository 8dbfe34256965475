#include <doctest.h>

#include <atomic>
#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "kgctx/embedding.hpp"
#include "kgctx/error.hpp"

using namespace kgctx;
using nlohmann::json;

namespace {

std::string random_word(std::mt19937_64& rng, int min_len = 3, int max_len = 12) {
    std::uniform_int_distribution<int> len(min_len, max_len);
    std::uniform_int_distribution<int> ch('a', 'z');
    std::string w;
    for (int i = len(rng); i > 0; --i) w.push_back(static_cast<char>(ch(rng)));
    return w;
}

} // namespace

TEST_CASE("cosine") {
    CHECK(cosine({1, 0}, {1, 0}) == doctest::Approx(1.0));
    CHECK(cosine({1, 0}, {0, 1}) == doctest::Approx(0.0));
    CHECK(cosine({1, 2}, {2, 4}) == doctest::Approx(1.0)); // scale invariance

    SUBCASE("errors") {
        CHECK_THROWS_AS(cosine({1, 0}, {1, 0, 0}), Error);
        CHECK_THROWS_WITH_AS(cosine({0, 0}, {1, 0}), doctest::Contains("undefined"), Error);
    }
    SUBCASE("symmetry, bound, positive rescaling") {
        std::mt19937_64 rng(3);
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::uniform_real_distribution<double> scale(0.1, 10.0);
        for (int i = 0; i < 200; ++i) {
            Embedding a(8), b(8);
            for (auto& x : a) x = gauss(rng);
            for (auto& x : b) x = gauss(rng);
            const double ab = cosine(a, b);
            CHECK(ab == doctest::Approx(cosine(b, a)).epsilon(1e-12));
            CHECK(std::abs(ab) <= 1.0 + 1e-12);
            Embedding scaled = a;
            const double c = scale(rng);
            for (auto& x : scaled) x *= c;
            CHECK(cosine(a, scaled) == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("hashing provider") {
    HashingProvider provider(256);

    SUBCASE("deterministic") {
        CHECK(provider.embed("a") == provider.embed("a"));
        CHECK(provider.embed("same text twice") == provider.embed("same text twice"));
    }
    SUBCASE("unit norm") {
        for (const char* text : {"a", "one two three", "(A, r1, B)", "...!?"}) {
            const auto v = provider.embed(text);
            double norm = 0.0;
            for (double x : v) norm += x * x;
            CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    SUBCASE("dimension respected") {
        HashingProvider small(32);
        CHECK(small.embed("abc").size() == 32);
        CHECK(provider.dim() == 256);
    }
    SUBCASE("empty text rejected") {
        CHECK_THROWS_AS(provider.embed(""), Error);
        CHECK_THROWS_AS(provider.embed("   "), Error);
    }
    SUBCASE("collision rate under 1% on 10k random strings") {
        std::mt19937_64 rng(41);
        std::set<std::string> texts;
        while (texts.size() < 10000) {
            std::string t = random_word(rng);
            const int extra = static_cast<int>(rng() % 3);
            for (int i = 0; i < extra; ++i) t += " " + random_word(rng);
            texts.insert(t);
        }
        std::set<std::vector<double>> vectors;
        for (const auto& t : texts) vectors.insert(provider.embed(t));
        const double collisions = static_cast<double>(texts.size() - vectors.size());
        CHECK(collisions / 10000.0 < 0.01);
    }
}

TEST_CASE("map provider") {
    MapProvider provider;
    provider.insert("(A, r1, B)", {0.25, -0.5, 0.125});

    SUBCASE("stored vector verbatim") {
        CHECK(provider.embed("(A, r1, B)") == Embedding{0.25, -0.5, 0.125});
    }
    SUBCASE("unknown key names the missing text") {
        CHECK_THROWS_WITH_AS(provider.embed("(X, y, Z)"), doctest::Contains("(X, y, Z)"), Error);
    }
    SUBCASE("dim consistency enforced") {
        CHECK_THROWS_AS(provider.insert("bad", {1.0}), Error);
        CHECK_THROWS_AS(provider.insert("nan", {0.0, std::nan(""), 0.0}), Error);
    }
    SUBCASE("jsonl read-back equality") {
        // Values chosen to stress double round-tripping.
        const Embedding expected{0.1, -2.5e-17, 3.141592653589793, 1e300};
        std::ostringstream file;
        file << json{{"key", "t"}, {"vector", expected}}.dump() << "\n";
        std::istringstream in(file.str());
        auto loaded = MapProvider::load_jsonl(in);
        CHECK(loaded.embed("t") == expected);
    }
}

TEST_CASE("caching provider") {
    HashingProvider inner(64);
    CachingProvider cached(inner);
    const auto v1 = cached.embed("hello world");
    CHECK(cached.cache_size() == 1);
    CHECK(cached.embed("hello world") == v1);
    CHECK(cached.cache_size() == 1);
    CHECK(v1 == inner.embed("hello world"));

    SUBCASE("safe under concurrent embeds") {
        std::vector<std::thread> pool;
        std::atomic<int> mismatches{0};
        for (int t = 0; t < 4; ++t) {
            pool.emplace_back([&] {
                for (int i = 0; i < 200; ++i) {
                    const std::string text = "text " + std::to_string(i % 17);
                    if (cached.embed(text) != inner.embed(text)) ++mismatches;
                }
            });
        }
        for (auto& t : pool) t.join();
        CHECK(mismatches == 0);
    }
}

TEST_CASE("remote provider against a stub server") {
    httplib::Server server;
    std::atomic<int> requests{0};
    server.Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
        ++requests;
        const auto body = json::parse(req.body);
        json vectors = json::array();
        for (const auto& text : body["texts"]) {
            // Length-keyed vector so order alignment is observable.
            const double n = static_cast<double>(text.get<std::string>().size());
            vectors.push_back(Embedding{n, 1.0, 0.0});
        }
        res.set_content(json{{"vectors", vectors}}.dump(), "application/json");
    });

    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    SUBCASE("batch of 3 is order-aligned") {
        RemoteProvider provider("http://127.0.0.1:" + std::to_string(port));
        const auto vectors = provider.embed_batch({"a", "bb", "cccc"});
        REQUIRE(vectors.size() == 3);
        CHECK(vectors[0][0] == 1.0);
        CHECK(vectors[1][0] == 2.0);
        CHECK(vectors[2][0] == 4.0);
        CHECK(provider.dim() == 3);
    }
    SUBCASE("chunking respects batch size") {
        RemoteProvider provider("http://127.0.0.1:" + std::to_string(port), 2);
        requests = 0;
        const auto vectors = provider.embed_batch({"a", "bb", "ccc", "dddd", "eeeee"});
        CHECK(vectors.size() == 5);
        CHECK(requests == 3); // ceil(5 / 2)
        CHECK(vectors[4][0] == 5.0);
    }
    SUBCASE("unreachable service is a transport error") {
        RemoteProvider provider("http://127.0.0.1:1"); // nothing listens there
        CHECK_THROWS_AS(provider.embed("x"), TransportError);
    }

    server.stop();
    server_thread.join();
}

TEST_CASE("remote provider surfaces non-200 as transport error") {
    httplib::Server server;
    server.Post("/embed", [](const httplib::Request&, httplib::Response& res) {
        res.status = 503;
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    RemoteProvider provider("http://127.0.0.1:" + std::to_string(port));
    CHECK_THROWS_WITH_AS(provider.embed("x"), doctest::Contains("503"), TransportError);

    server.stop();
    server_thread.join();
}

TEST_CASE("provider descriptors") {
    CHECK(make_provider("hash")->name() == "deterministic-hash");
    CHECK(make_provider("hash:64")->dim() == 64);
    CHECK_THROWS_AS(make_provider("hash:zero"), Error);
    CHECK_THROWS_AS(make_provider("bogus"), Error);
}
