#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "emospace/concepts.hpp"
#include "emospace/error.hpp"
#include "test_support.hpp"

using namespace emospace;

namespace {

const EmotionLabel& joy() { return kEmotions[19]; }

AssociationGraph graph_of(const std::string& edges) {
    std::istringstream in(edges);
    return parse_association_graph(in);
}

/// Unit vector at angle acos(s) from e0, so its cosine with e0 is s.
SparseFeatureVector at_similarity(double s) {
    SparseFeatureVector v{2, {}, {}};
    const double c = std::sqrt(std::max(0.0, 1.0 - s * s));
    if (s > 0) {
        v.indices.push_back(0);
        v.values.push_back(static_cast<float>(s));
    }
    if (c > 0) {
        v.indices.push_back(1);
        v.values.push_back(static_cast<float>(c));
    }
    return v;
}

/// Brute force: score everything, stable sort by (similarity desc, word asc), truncate.
std::vector<std::string> oracle_top_k(const std::vector<std::string>& pool, const SparseFeatureVector& label,
                                      const WordVectors& vecs, std::size_t k) {
    std::vector<std::pair<double, std::string>> all;
    for (const auto& w : pool) {
        const auto it = vecs.find(w);
        if (it == vecs.end() || it->second.empty()) continue;
        double dot = 0, na = 0, nb = 0;
        const auto a = label.to_dense();
        const auto b = it->second.to_dense();
        for (std::size_t i = 0; i < a.size(); ++i) {
            dot += static_cast<double>(a[i]) * b[i];
            na += static_cast<double>(a[i]) * a[i];
            nb += static_cast<double>(b[i]) * b[i];
        }
        all.emplace_back(dot / (std::sqrt(na) * std::sqrt(nb)), w);
    }
    std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) {
        if (x.first != y.first) return x.first > y.first;
        return x.second < y.second;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back(all[i].second);
    return out;
}

}  // namespace

TEST_SUITE("concepts") {
    TEST_CASE("candidate pool is the union of forward responses and backward cues") {
        const auto g = graph_of("joy\thappy\t1\njoy\tsmile\t1\nglee\tjoy\t1\nsad\tcry\t1\njoy\tjoy\t1\n");
        const CandidatePool pool = extract_candidates(g, joy(), Language::En);
        CHECK(pool.words == std::vector<std::string>{"glee", "happy", "smile"});
        CHECK(pool.provenance.at("glee") == kBackward);
        CHECK(pool.provenance.at("happy") == kForward);
    }

    TEST_CASE("word reached in both directions carries both provenance bits") {
        const auto g = graph_of("joy\thappy\t1\nhappy\tjoy\t1\n");
        const CandidatePool pool = extract_candidates(g, joy(), Language::En);
        CHECK(pool.provenance.at("happy") == (kForward | kBackward));
    }

    TEST_CASE("absent label gives an empty pool with a diagnostic") {
        const auto g = graph_of("sad\tcry\t1\n");
        const CandidatePool pool = extract_candidates(g, joy(), Language::En);
        CHECK(pool.words.empty());
        CHECK_FALSE(pool.diagnostics.empty());
        CHECK(extract_candidates(g, joy(), Language::Zh).words.empty());
    }

    TEST_CASE("fewer candidates than k keeps all of them in similarity order") {
        CandidatePool pool{joy(), Language::En, {"a", "b", "c", "d", "e"}, {}, {}};
        const std::vector<double> sims{0.1, 0.5, 0.9, 0.3, 0.7};
        WordVectors vecs;
        for (std::size_t i = 0; i < 5; ++i) vecs[pool.words[i]] = at_similarity(sims[i]);
        const ConceptSet cs = build_concept_set(pool, at_similarity(1.0), vecs, 10);
        REQUIRE(cs.words.size() == 5);
        const std::vector<std::string> expected{"c", "e", "b", "d", "a"};
        for (std::size_t i = 0; i < 5; ++i) CHECK(cs.words[i].word == expected[i]);
        CHECK(cs.words[0].similarity == doctest::Approx(0.9).epsilon(1e-6));
        CHECK(cs.pool_size == 5);
    }

    TEST_CASE("ties on similarity go to the codepoint-smaller word") {
        CandidatePool pool{joy(), Language::En, {"zeta", "alpha", "mid"}, {}, {}};
        WordVectors vecs;
        vecs["zeta"] = at_similarity(0.8);
        vecs["alpha"] = at_similarity(0.8);
        vecs["mid"] = at_similarity(0.2);
        const ConceptSet cs = build_concept_set(pool, at_similarity(1.0), vecs, 2);
        REQUIRE(cs.words.size() == 2);
        CHECK(cs.words[0].word == "alpha");
        CHECK(cs.words[1].word == "zeta");
    }

    TEST_CASE("random pools match the brute-force oracle and ignore pool order") {
        Rng rng(42);
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t L = 16 + rng.below(48);
            const std::size_t n = 5 + rng.below(40);
            CandidatePool pool{joy(), Language::En, {}, {}, {}};
            WordVectors vecs;
            for (std::size_t i = 0; i < n; ++i) {
                std::string w = "w" + std::to_string(rng.below(1000));
                if (std::find(pool.words.begin(), pool.words.end(), w) != pool.words.end()) continue;
                pool.words.push_back(w);
                if (rng.uniform() < 0.9) vecs[w] = emospace::testing::random_code(rng, L, 0.25);
                if (rng.uniform() < 0.1 && !vecs.empty()) vecs[w] = vecs.begin()->second;  // planted tie
            }
            SparseFeatureVector label = emospace::testing::random_code(rng, L, 0.4);
            if (label.empty()) label = SparseFeatureVector{L, {0}, {1.0f}};
            const auto expected = oracle_top_k(pool.words, label, vecs, 10);
            if (expected.empty()) continue;
            const ConceptSet cs = build_concept_set(pool, label, vecs, 10);
            std::vector<std::string> got;
            for (const auto& w : cs.words) got.push_back(w.word);
            CHECK(got == expected);
            for (std::size_t i = 1; i < cs.words.size(); ++i) CHECK(cs.words[i - 1].similarity >= cs.words[i].similarity);
            for (const auto& w : got) CHECK(std::find(pool.words.begin(), pool.words.end(), w) != pool.words.end());

            CandidatePool shuffled = pool;
            rng.shuffle(std::span<std::string>(shuffled.words));
            const ConceptSet again = build_concept_set(shuffled, label, vecs, 10);
            REQUIRE(again.words.size() == cs.words.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                CHECK(again.words[i].word == cs.words[i].word);
                CHECK(again.words[i].similarity == cs.words[i].similarity);
            }
        }
    }

    TEST_CASE("words without vectors are skipped and reported") {
        CandidatePool pool{joy(), Language::En, {"a", "b", "c"}, {}, {}};
        WordVectors vecs;
        vecs["a"] = at_similarity(0.5);
        vecs["c"] = SparseFeatureVector{2, {}, {}};
        const ConceptSet cs = build_concept_set(pool, at_similarity(1.0), vecs);
        CHECK(cs.words.size() == 1);
        CHECK(cs.skipped == std::vector<std::string>{"b", "c"});
    }

    TEST_CASE("zero label vector and an all-skipped pool are errors") {
        CandidatePool pool{joy(), Language::En, {"a"}, {}, {}};
        WordVectors vecs;
        vecs["a"] = at_similarity(0.5);
        CHECK_THROWS_AS(build_concept_set(pool, SparseFeatureVector{2, {}, {}}, vecs), Error);
        CandidatePool missing{joy(), Language::En, {"zzz"}, {}, {}};
        CHECK_THROWS_AS(build_concept_set(missing, at_similarity(1.0), vecs), Error);
    }

    TEST_CASE("every emotion yields a concept set or an explicit diagnostic") {
        std::string edges = "joy\thappy\t1\nfear\tscared\t1\n";
        const auto g = graph_of(edges);
        WordVectors vecs;
        vecs["joy"] = at_similarity(1.0);
        vecs["happy"] = at_similarity(0.6);
        vecs["scared"] = at_similarity(0.4);  // fear's label has no vector
        const auto outcomes = build_all_concept_sets(g, vecs, Language::En);
        REQUIRE(outcomes.size() == 26);
        for (const auto& o : outcomes) CHECK((o.concept_set.has_value() || !o.diagnostics.empty()));
        CHECK(outcomes[19].concept_set.has_value());
        CHECK_FALSE(outcomes[16].concept_set.has_value());
    }

    TEST_CASE("the emotion table has 26 categories with unique keys and labels") {
        std::set<std::string_view> keys, zh;
        for (const auto& e : kEmotions) {
            keys.insert(e.key);
            zh.insert(e.chinese);
        }
        CHECK(keys.size() == 26);
        CHECK(zh.size() == 26);
        CHECK(find_emotion("Joy")->index == 20);
        CHECK(find_emotion("快乐")->index == 20);
        CHECK(find_emotion("empathic_pain")->index == 14);
        CHECK_FALSE(find_emotion("sexual desire").has_value());
    }
}
