#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "kgctx/error.hpp"
#include "kgctx/retrieval.hpp"
#include "kgctx/text.hpp"

using namespace kgctx;

namespace {

KnowledgeGraph ingest_tsv(const std::string& text) {
    std::istringstream in(text);
    return KnowledgeGraph::ingest(in, TripleFormat::tsv);
}

// Oracle for mask_entities: character scan over the normalized question,
// replacing any position where some normalized entity starts.
std::string mask_oracle(const std::string& question, const std::vector<std::string>& entities,
                        const std::string& token) {
    // Only valid for questions that are already in normalized form (no
    // uppercase, no whitespace runs), which the property test guarantees.
    std::vector<std::string> norms;
    for (const auto& e : entities)
        if (!normalize_entity(e).empty()) norms.push_back(normalize_entity(e));
    std::sort(norms.begin(), norms.end(),
              [](const auto& a, const auto& b) { return a.size() > b.size(); });
    std::string out;
    size_t i = 0;
    while (i < question.size()) {
        bool hit = false;
        for (const auto& n : norms) {
            if (question.compare(i, n.size(), n) == 0) {
                out += token;
                i += n.size();
                hit = true;
                break;
            }
        }
        if (!hit) out += question[i++];
    }
    return out;
}

Candidate cand(const std::string& h, const std::string& r, const std::string& t, int hop = 1) {
    return {make_triple(h, r, t), hop};
}

} // namespace

TEST_CASE("mask_entities") {
    SUBCASE("figure-1 question") {
        CHECK(mask_entities("Who is to the right of R.Madhavan?",
                            {"Kangana Ranaut", "R. Madhavan"},
                            "<MASK>") == "Who is to the right of <MASK>?");
    }
    SUBCASE("spacing variant in the question") {
        CHECK(mask_entities("Who is to the right of R. Madhavan?", {"R.Madhavan"}, "<MASK>") ==
              "Who is to the right of <MASK>?");
    }
    SUBCASE("no occurrences leaves the string unchanged") {
        CHECK(mask_entities("Who is in the image?", {"Kangana Ranaut"}, "<MASK>") ==
              "Who is in the image?");
    }
    SUBCASE("every occurrence replaced") {
        CHECK(mask_entities("A met A.", {"A"}, "<MASK>") == "<MASK> met <MASK>.");
    }
    SUBCASE("case-insensitive match") {
        CHECK(mask_entities("was BARACK OBAMA here?", {"Barack Obama"}, "<MASK>") ==
              "was <MASK> here?");
    }
    SUBCASE("longest entity wins") {
        CHECK(mask_entities("New York City is big", {"York", "New York City"}, "<MASK>") ==
              "<MASK> is big");
    }
    SUBCASE("empty entity list") {
        CHECK(mask_entities("anything", {}, "<MASK>") == "anything");
    }
    SUBCASE("idempotent") {
        const std::string once =
            mask_entities("A met A and ate.", {"A", "ate"}, "<MASK>");
        CHECK(mask_entities(once, {"A", "ate"}, "<MASK>") == once);
    }
    SUBCASE("mask token is never re-masked") {
        // "ask" would match inside "<MASK>" if masked spans were rescanned.
        const std::string q = "ask <MASK> something";
        CHECK(mask_entities(q, {"ask"}, "<MASK>") == "<MASK> <MASK> something");
    }
    SUBCASE("matches the scan oracle on normalized questions") {
        std::mt19937_64 rng(23);
        const std::vector<std::string> words{"who", "is", "left", "of", "anna",
                                             "bob", "cara bo", "x.y", "the"};
        std::uniform_int_distribution<size_t> pick(0, words.size() - 1);
        for (int trial = 0; trial < 300; ++trial) {
            std::string q;
            for (int i = 0; i < 8; ++i) {
                if (i) q += " ";
                q += words[pick(rng)];
            }
            std::vector<std::string> entities{words[pick(rng)], words[pick(rng)]};
            CHECK(mask_entities(q, entities, "#") == mask_oracle(q, entities, "#"));
        }
    }
}

TEST_CASE("score_candidates") {
    SUBCASE("empty candidate set") {
        HashingProvider provider(32);
        CHECK(score_candidates("whatever", {}, provider).empty());
    }
    SUBCASE("identical embeddings score 1.0") {
        MapProvider provider;
        provider.insert("q", {1.0, 2.0});
        provider.insert("(A, r1, B)", {2.0, 4.0});
        const auto scored = score_candidates("q", {cand("A", "r1", "B")}, provider);
        REQUIRE(scored.size() == 1);
        CHECK(scored[0].score == doctest::Approx(1.0));
        CHECK(scored[0].hop == 1);
    }
    SUBCASE("matches an independent recomputation") {
        HashingProvider provider(128);
        std::vector<Candidate> candidates;
        for (int i = 0; i < 10; ++i)
            candidates.push_back(cand("h" + std::to_string(i), "rel", "t" + std::to_string(i), 2));
        const std::string q = "which facts matter?";
        const auto scored = score_candidates(q, candidates, provider);
        REQUIRE(scored.size() == 10);
        for (size_t i = 0; i < scored.size(); ++i) {
            const double expected =
                cosine(provider.embed(q), provider.embed(serialize_triple(candidates[i].triple)));
            CHECK(scored[i].score == doctest::Approx(expected).epsilon(1e-12));
            CHECK(scored[i].triple == candidates[i].triple);
        }
    }
    SUBCASE("provider error names the offending triple") {
        MapProvider provider;
        provider.insert("q", {1.0, 0.0});
        provider.insert("(A, r1, B)", {1.0, 0.0});
        CHECK_THROWS_WITH_AS(
            score_candidates("q", {cand("A", "r1", "B"), cand("X", "y", "Z")}, provider),
            doctest::Contains("(X, y, Z)"), Error);
    }
}

TEST_CASE("select_context") {
    RetrievalConfig dynamic;
    dynamic.mode = SelectionMode::dynamic;
    dynamic.lambda = 0.8;
    RetrievalConfig fixed;
    fixed.mode = SelectionMode::fixed;
    fixed.top_k = 5;

    const std::vector<ScoredTriple> scored = {
        {make_triple("t1", "r", "x"), 0.95, 1},
        {make_triple("t2", "r", "x"), 0.80, 1},
        {make_triple("t3", "r", "x"), 0.79, 1},
    };

    SUBCASE("dynamic boundary is inclusive") {
        const auto bundle = select_context(scored, dynamic);
        REQUIRE(bundle.selected.size() == 2);
        CHECK(bundle.selected[0].triple.head == "t1");
        CHECK(bundle.selected[1].triple.head == "t2"); // score == lambda stays in
        CHECK(bundle.candidate_count == 3);
    }
    SUBCASE("dynamic can select nothing") {
        RetrievalConfig strict = dynamic;
        strict.lambda = 0.99;
        CHECK(select_context(scored, strict).selected.empty());
    }
    SUBCASE("fixed takes the whole pool when k exceeds it") {
        const auto bundle = select_context(scored, fixed);
        CHECK(bundle.selected.size() == 3);
    }
    SUBCASE("fixed matches a full-sort oracle prefix") {
        std::mt19937_64 rng(29);
        std::uniform_real_distribution<double> score(-1.0, 1.0);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<ScoredTriple> pool;
            for (int i = 0; i < 100; ++i) {
                // Coarse grid forces score ties so the tie-break is exercised.
                const double s = std::round(score(rng) * 8.0) / 8.0;
                pool.push_back({make_triple("h" + std::to_string(i), "r", "t"), s, 1});
            }
            auto oracle = pool;
            std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
                if (a.score != b.score) return a.score > b.score;
                return serialize_triple(a.triple) < serialize_triple(b.triple);
            });
            const auto bundle = select_context(pool, fixed);
            REQUIRE(bundle.selected.size() == 5);
            for (int i = 0; i < 5; ++i) CHECK(bundle.selected[i] == oracle[i]);
        }
    }
    SUBCASE("dynamic equals brute-force threshold filter") {
        std::mt19937_64 rng(31);
        std::uniform_real_distribution<double> score(-1.0, 1.0);
        std::uniform_real_distribution<double> lambda_dist(-1.0, 1.0);
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<ScoredTriple> pool;
            for (int i = 0; i < 60; ++i)
                pool.push_back({make_triple("h" + std::to_string(i), "r", "t"), score(rng), 1});
            RetrievalConfig cfg = dynamic;
            cfg.lambda = lambda_dist(rng);
            std::set<std::string> expected;
            for (const auto& st : pool)
                if (st.score >= cfg.lambda) expected.insert(serialize_triple(st.triple));
            std::set<std::string> got;
            for (const auto& st : select_context(pool, cfg).selected)
                got.insert(serialize_triple(st.triple));
            CHECK(got == expected);
        }
    }
    SUBCASE("monotone in lambda") {
        std::mt19937_64 rng(37);
        std::uniform_real_distribution<double> score(-1.0, 1.0);
        std::vector<ScoredTriple> pool;
        for (int i = 0; i < 80; ++i)
            pool.push_back({make_triple("h" + std::to_string(i), "r", "t"), score(rng), 1});
        for (int trial = 0; trial < 40; ++trial) {
            RetrievalConfig lo = dynamic, hi = dynamic;
            lo.lambda = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
            hi.lambda = std::uniform_real_distribution<double>(lo.lambda, 1.0)(rng);
            std::set<std::string> lo_set, hi_set;
            for (const auto& st : select_context(pool, lo).selected)
                lo_set.insert(serialize_triple(st.triple));
            for (const auto& st : select_context(pool, hi).selected)
                hi_set.insert(serialize_triple(st.triple));
            CHECK(std::includes(lo_set.begin(), lo_set.end(), hi_set.begin(), hi_set.end()));
        }
    }
    SUBCASE("fixed size law and dominance") {
        std::mt19937_64 rng(41);
        std::uniform_real_distribution<double> score(-1.0, 1.0);
        for (int trial = 0; trial < 30; ++trial) {
            const int n = 1 + static_cast<int>(rng() % 12);
            std::vector<ScoredTriple> pool;
            for (int i = 0; i < n; ++i)
                pool.push_back({make_triple("h" + std::to_string(i), "r", "t"), score(rng), 1});
            RetrievalConfig cfg = fixed;
            cfg.top_k = 1 + static_cast<int>(rng() % 9);
            const auto bundle = select_context(pool, cfg);
            CHECK(bundle.selected.size() ==
                  std::min<size_t>(static_cast<size_t>(cfg.top_k), pool.size()));
            double worst_selected = 2.0;
            for (const auto& st : bundle.selected) worst_selected = std::min(worst_selected, st.score);
            std::set<std::string> chosen;
            for (const auto& st : bundle.selected) chosen.insert(serialize_triple(st.triple));
            for (const auto& st : pool) {
                if (!chosen.count(serialize_triple(st.triple)))
                    CHECK(st.score <= worst_selected + 1e-15);
            }
        }
    }
}

TEST_CASE("retrieve") {
    SUBCASE("unknown entities produce an empty bundle") {
        const auto kg = ingest_tsv("A\tr1\tB\n");
        HashingProvider provider(64);
        Query q{"q0", "who is this?", {"stranger"}, {}, {}};
        const auto bundle = retrieve(kg, q, RetrievalConfig{}, provider);
        CHECK(bundle.candidate_count == 0);
        CHECK(bundle.selected.empty());
    }

    SUBCASE("planted relevance: dynamic finds exactly the planted set") {
        // 7 planted triples embed at cosine ~0.95 to the masked question,
        // 5 distractors at ~0.30; lambda 0.8 must keep exactly the planted 7
        // while fixed top-5 truncates.
        MapProvider provider;
        const Embedding u{1, 0, 0, 0};
        const double close = 0.95, far = 0.3;
        std::string tsv;
        Query q{"q0", "what supports claim one?", {"E0"}, {}, {}};
        provider.insert(q.question, u); // no entity occurs in the question text
        for (int i = 0; i < 7; ++i) {
            const Triple t = make_triple("E0", "supports", "fact" + std::to_string(i));
            tsv += t.head + "\t" + t.relation + "\t" + t.tail + "\n";
            provider.insert(serialize_triple(t),
                            {close, std::sqrt(1 - close * close) * (i % 2 ? 1.0 : -1.0),
                             i >= 4 ? 1e-9 : 0.0, static_cast<double>(i) * 1e-9});
        }
        for (int i = 0; i < 5; ++i) {
            const Triple t = make_triple("E0", "mentions", "noise" + std::to_string(i));
            tsv += t.head + "\t" + t.relation + "\t" + t.tail + "\n";
            provider.insert(serialize_triple(t),
                            {far, std::sqrt(1 - far * far), static_cast<double>(i) * 1e-9, 0.0});
        }
        const auto kg = ingest_tsv(tsv);

        RetrievalConfig dynamic;
        const auto bundle = retrieve(kg, q, dynamic, provider);
        CHECK(bundle.candidate_count == 12);
        REQUIRE(bundle.selected.size() == 7);
        for (const auto& st : bundle.selected) {
            CHECK(st.triple.relation == "supports");
            CHECK(st.score >= 0.8);
        }

        RetrievalConfig fixed;
        fixed.mode = SelectionMode::fixed;
        fixed.top_k = 5;
        const auto top5 = retrieve(kg, q, fixed, provider);
        REQUIRE(top5.selected.size() == 5);
        for (const auto& st : top5.selected) CHECK(st.triple.relation == "supports");
    }

    SUBCASE("hop gating controls reachability") {
        const auto kg = ingest_tsv("A\tr1\tB\nB\tr2\tC\nC\tr3\tD\n");
        MapProvider provider;
        Query q{"q0", "what follows the start?", {"A"}, {}, {}};
        provider.insert(q.question, {1, 0});
        provider.insert("(A, r1, B)", {0, 1});  // cosine 0
        provider.insert("(B, r2, C)", {1, 0});  // cosine 1
        provider.insert("(C, r3, D)", {0, 1});

        RetrievalConfig cfg;
        cfg.lambda = 0.9;
        cfg.hops = 1;
        CHECK(retrieve(kg, q, cfg, provider).selected.empty());
        cfg.hops = 2;
        const auto bundle = retrieve(kg, q, cfg, provider);
        REQUIRE(bundle.selected.size() == 1);
        CHECK(bundle.selected[0].triple == make_triple("B", "r2", "C"));
        CHECK(bundle.selected[0].hop == 2);
    }

    SUBCASE("masking invariance: surface form of entities does not change scores") {
        const auto kg = ingest_tsv("R.Madhavan\tspouse\tSarita Birje\nR.Madhavan\toccupation\tactor\n");
        HashingProvider provider(128);
        Query a{"q", "Who married R.Madhavan?", {"R.Madhavan"}, {}, {}};
        Query b{"q", "Who married R. Madhavan?", {"R. Madhavan"}, {}, {}};
        RetrievalConfig cfg;
        cfg.lambda = -1.0; // keep everything; scores must still agree
        const auto ba = bundle_to_json(a.id, retrieve(kg, a, cfg, provider));
        const auto bb = bundle_to_json(b.id, retrieve(kg, b, cfg, provider));
        CHECK(ba.dump() == bb.dump());
    }

    SUBCASE("deterministic bundle serialization") {
        std::mt19937_64 rng(47);
        std::string tsv;
        for (int i = 0; i < 50; ++i)
            tsv += "hub\tr" + std::to_string(i) + "\tt" + std::to_string(i) + "\n";
        const auto kg = ingest_tsv(tsv);
        HashingProvider provider(64);
        Query q{"q", "what is connected to the hub?", {"hub"}, {}, {}};
        RetrievalConfig cfg;
        cfg.lambda = -1.0;
        const auto first = bundle_to_json(q.id, retrieve(kg, q, cfg, provider)).dump();
        for (int i = 0; i < 3; ++i)
            CHECK(bundle_to_json(q.id, retrieve(kg, q, cfg, provider)).dump() == first);
    }
}

TEST_CASE("queries jsonl") {
    std::istringstream in(
        R"({"id":"q1","question":"Who?","entities":["A","B"],"answer":"x","class":"spatial"})"
        "\n"
        R"({"id":"q2","question":"What?"})"
        "\n");
    const auto queries = load_queries_jsonl(in);
    REQUIRE(queries.size() == 2);
    CHECK(queries[0].entities.size() == 2);
    CHECK(queries[0].gold_answer == "x");
    CHECK(queries[0].question_class == "spatial");
    CHECK(!queries[1].gold_answer);

    std::istringstream dup(R"({"id":"q1","question":"a"})"
                           "\n"
                           R"({"id":"q1","question":"b"})"
                           "\n");
    CHECK_THROWS_WITH_AS(load_queries_jsonl(dup), doctest::Contains("duplicate"), Error);
}
