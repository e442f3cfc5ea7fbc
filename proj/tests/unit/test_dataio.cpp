#include <doctest.h>

#include <bit>
#include <fstream>
#include <sstream>

#include "emospace/dataio.hpp"
#include "emospace/error.hpp"
#include "emospace/sae.hpp"
#include "test_support.hpp"

using namespace emospace;
using emospace::testing::TempDir;
using emospace::testing::code_of;

TEST_SUITE("dataio") {
    TEST_CASE("2x3 matrix reads back row-major") {
        TempDir dir("matrix");
        const MatrixF m(2, 3, {1, 2, 3, 4, 5, 6});
        write_matrix(dir / "m.json", m);
        const MatrixF back = load_matrix(dir / "m.json");
        CHECK(back.rows() == 2);
        CHECK(back.cols() == 3);
        CHECK(back(0, 2) == 3.0f);
        CHECK(back(1, 0) == 4.0f);
        const auto manifest = read_matrix_manifest(dir / "m.json");
        CHECK(manifest.dtype == "f32");
        CHECK(manifest.blob_path == "m.bin");
        CHECK(std::filesystem::file_size(dir / "m.bin") == 24);
    }

    TEST_CASE("random matrices roundtrip bit-exactly, including extreme finite values") {
        TempDir dir("matrix-rt");
        Rng rng(5);
        MatrixF m(64, 37);
        for (float& v : m.data()) v = std::bit_cast<float>(static_cast<std::uint32_t>(rng.next()));
        for (float& v : m.data()) {
            if (!std::isfinite(v)) v = -0.0f;
        }
        m(0, 0) = std::numeric_limits<float>::denorm_min();
        m(0, 1) = std::numeric_limits<float>::max();
        write_matrix(dir / "r.json", m);
        const MatrixF back = load_matrix(dir / "r.json");
        REQUIRE(back.size() == m.size());
        for (std::size_t i = 0; i < m.size(); ++i) {
            CHECK(std::bit_cast<std::uint32_t>(back.data()[i]) == std::bit_cast<std::uint32_t>(m.data()[i]));
        }
    }

    TEST_CASE("truncated blob, corrupted blob and unsupported dtype are rejected") {
        TempDir dir("matrix-bad");
        write_matrix(dir / "m.json", MatrixF(2, 3, {1, 2, 3, 4, 5, 6}));
        {
            std::string blob = read_file(dir / "m.bin");
            blob.resize(blob.size() - 4);
            write_file_atomic(dir / "m.bin", blob);
        }
        CHECK(code_of([&] { load_matrix(dir / "m.json"); }) == ErrorCode::Shape);

        write_matrix(dir / "c.json", MatrixF(2, 3, {1, 2, 3, 4, 5, 6}));
        {
            std::string blob = read_file(dir / "c.bin");
            blob[0] ^= 1;
            write_file_atomic(dir / "c.bin", blob);
        }
        CHECK(code_of([&] { load_matrix(dir / "c.json"); }) == ErrorCode::Checksum);

        write_matrix(dir / "d.json", MatrixF(1, 1, {1}));
        std::string manifest = read_file(dir / "d.json");
        manifest.replace(manifest.find("f32"), 3, "f64");
        write_file_atomic(dir / "d.json", manifest);
        CHECK(code_of([&] { load_matrix(dir / "d.json"); }) == ErrorCode::Format);
        CHECK(code_of([&] { load_matrix(dir / "missing.json"); }) == ErrorCode::Io);
    }

    TEST_CASE("SAE manifest roundtrip") {
        TempDir dir("sae");
        Rng rng(9);
        SaeModel sae = emospace::testing::random_sae(rng, 4, 12);
        sae.model_id = "unit/sae";
        sae.layer_index = 9;
        write_sae(dir / "sae.json", sae);
        const SaeModel back = load_sae(dir / "sae.json");
        CHECK(back.model_id == "unit/sae");
        CHECK(back.layer_index == 9);
        CHECK(back.encoder == sae.encoder);
        CHECK(back.decoder == sae.decoder);
        CHECK(back.encoder_bias == sae.encoder_bias);
        CHECK(back.threshold == sae.threshold);
        CHECK_FALSE(back.threshold_defaulted);
    }

    TEST_CASE("activation records: parse, canonical serialize, idempotent reparse") {
        const std::string text =
            R"({"word":"joy","lang":"en","indices":[1,4],"values":[0.5,2]})" "\n"
            R"({"word":"快乐","lang":"zh","indices":[0],"values":[1.25]})" "\n"
            R"({"word":"calm","lang":"en","indices":[],"values":[]})" "\n";
        std::istringstream in(text);
        const auto records = parse_activation_records(in, 8);
        REQUIRE(records.size() == 3);
        CHECK(records[0].features.indices == std::vector<std::uint32_t>{1, 4});
        std::ostringstream once;
        serialize_activation_records(once, records);
        std::istringstream again_in(once.str());
        std::ostringstream twice;
        serialize_activation_records(twice, parse_activation_records(again_in, 8));
        CHECK(once.str() == twice.str());
        // Canonical order: en words first in codepoint order, then zh.
        CHECK(once.str().rfind(R"({"word":"calm")", 0) == 0);
        const auto en = word_vectors_for(records, Language::En);
        CHECK(en.size() == 2);
        CHECK(en.count("joy") == 1);
    }

    TEST_CASE("activation records reject duplicates, bad indices and non-positive values") {
        auto parse = [](const std::string& s) {
            std::istringstream in(s);
            return parse_activation_records(in, 4);
        };
        CHECK(code_of([&] {
                  parse(R"({"word":"a","lang":"en","indices":[0],"values":[1]})" "\n"
                        R"({"word":"a","lang":"en","indices":[1],"values":[1]})");
              }) == ErrorCode::Duplicate);
        CHECK(code_of([&] { parse(R"({"word":"a","lang":"en","indices":[4],"values":[1]})"); }) == ErrorCode::Range);
        CHECK(code_of([&] { parse(R"({"word":"a","lang":"en","indices":[2,1],"values":[1,1]})"); }) !=
              ErrorCode::Io);
        CHECK_THROWS_AS(parse(R"({"word":"a","lang":"en","indices":[1],"values":[0]})"), Error);
        CHECK_THROWS_AS(parse(R"({"word":"a","lang":"fr","indices":[],"values":[]})"), Error);
        CHECK_NOTHROW(parse(R"({"word":"a","lang":"en","indices":[],"values":[]})" "\n"
                            R"({"word":"a","lang":"zh","indices":[],"values":[]})"));
    }

    TEST_CASE("association graph: forward/backward, summed duplicates, empty input") {
        std::istringstream in("joy\thappy\t3\nsmile\tjoy\t1\njoy\thappy\t2\n");
        const AssociationGraph g = parse_association_graph(in);
        CHECK(g.forward("joy") == std::vector<std::string>{"happy"});
        CHECK(g.backward("joy") == std::vector<std::string>{"smile"});
        CHECK(g.count("joy", "happy") == 5);
        CHECK(g.edge_count() == 2);
        std::istringstream empty("");
        CHECK(parse_association_graph(empty).edge_count() == 0);
        std::istringstream zero("a\tb\t0\n");
        CHECK(code_of([&] { parse_association_graph(zero); }) == ErrorCode::Range);
        std::istringstream malformed("a\tb\n");
        CHECK(code_of([&] { parse_association_graph(malformed); }) == ErrorCode::Format);
    }

    TEST_CASE("lexicon: in-range rows accepted, out-of-range and duplicate rows rejected") {
        const RatingBounds en{1, 9, 1, 9};
        std::istringstream ok("word\tvalence\tarousal\ncalm\t7.5\t2.0\n");
        const AffectiveLexicon lex = parse_lexicon(ok, en, Language::En);
        CHECK(lex.size() == 1);
        CHECK(lex.find("calm")->valence_raw == 7.5);
        const RatingBounds zh{-3, 3, 0, 4};
        std::istringstream bad("悲伤\t-3.5\t2\n");
        CHECK(code_of([&] { parse_lexicon(bad, zh, Language::Zh); }) == ErrorCode::Range);
        std::istringstream dup("a\t1\t1\na\t2\t2\n");
        CHECK(code_of([&] { parse_lexicon(dup, en, Language::En); }) == ErrorCode::Duplicate);
    }

    TEST_CASE("lexicon file and sidecar roundtrip") {
        TempDir dir("lexicon");
        AffectiveLexicon lex;
        lex.language = Language::Zh;
        lex.bounds = {-3, 3, 0, 4};
        lex.entries["快乐"] = {2.5, 3.25, {}, {}};
        lex.entries["平静"] = {1.0 / 3.0, 0.1, {}, {}};
        write_lexicon(dir / "lex.tsv", lex);
        const RatingBounds b = load_rating_bounds(lexicon_sidecar_path(dir / "lex.tsv"));
        CHECK(b.valence_min == -3);
        CHECK(b.arousal_max == 4);
        const AffectiveLexicon back = load_lexicon(dir / "lex.tsv", b, Language::Zh);
        CHECK(back.find("平静")->valence_raw == 1.0 / 3.0);
        CHECK(back.find("快乐")->arousal_raw == 3.25);
    }

    TEST_CASE("steering bundle roundtrip") {
        TempDir dir("bundle");
        SteeringBundle b;
        b.emotion = "fear";
        b.language = Language::Zh;
        b.sae_id = "toy";
        b.layer = 7;
        b.hidden_dim = 3;
        b.width = 10;
        b.feature_indices = {1, 4, 9};
        b.dense_sum = {0.1f, -2.0f, 3.5f};
        b.provenance.ranking_rule = "rule";
        b.provenance.components = 4;
        b.provenance.ranked_features = {9, 1, 4};
        b.provenance.feature_scores = {0.9, 0.5, 0.25};
        b.provenance.concept_words = {"害怕"};
        write_steering_bundle(dir / "b.json", b);
        const SteeringBundle back = load_steering_bundle(dir / "b.json");
        CHECK(back.emotion == "fear");
        CHECK(back.language == Language::Zh);
        CHECK(back.layer == 7);
        CHECK(back.feature_indices == b.feature_indices);
        CHECK(back.dense_sum == b.dense_sum);
        CHECK(back.provenance.ranked_features == b.provenance.ranked_features);
        CHECK(back.provenance.feature_scores == b.provenance.feature_scores);
        CHECK(back.provenance.concept_words == b.provenance.concept_words);
    }

    TEST_CASE("score table: roundtrip, header and range checks") {
        TempDir dir("scores");
        std::vector<ScoreRow> rows(2);
        rows[0] = {"s1", "table, chair", "joy", 5.0, {0.1, 0.0, 0.0, 0.8, 0.05, 0.05, 0.0}};
        rows[1] = {"s2", "lamp", "fear", 0.0, {0, 0, 1, 0, 0, 0, 0}};
        write_score_table(dir / "s.csv", rows);
        const auto back = load_score_table(dir / "s.csv");
        REQUIRE(back.size() == 2);
        CHECK(back[0].cue_word == "table, chair");
        CHECK(back[0].scores[3] == 0.8);
        CHECK(back[1].steering_factor == 0.0);

        std::istringstream no_header("s1,c,joy,0,0,0,0,0,0,0,0\n");
        CHECK(code_of([&] { parse_score_table(no_header); }) == ErrorCode::Format);
        std::istringstream six_cols(
            "sentence_id,cue_word,target_emotion,steering_factor,anger,disgust,fear,joy,sadness,surprise\n");
        CHECK(code_of([&] { parse_score_table(six_cols); }) == ErrorCode::Format);
        std::istringstream out_of_range(
            "sentence_id,cue_word,target_emotion,steering_factor,anger,disgust,fear,joy,sadness,surprise,neutral\n"
            "s,c,joy,0,0,0,0,1.5,0,0,0\n");
        CHECK(code_of([&] { parse_score_table(out_of_range); }) == ErrorCode::Range);
        std::istringstream negative_factor(
            "sentence_id,cue_word,target_emotion,steering_factor,anger,disgust,fear,joy,sadness,surprise,neutral\n"
            "s,c,joy,-1,0,0,0,0,0,0,0\n");
        CHECK(code_of([&] { parse_score_table(negative_factor); }) == ErrorCode::Range);
    }

    TEST_CASE("word pairs and atomic writes") {
        TempDir dir("pairs");
        write_file_atomic(dir / "p.tsv", "joy\t快乐\nfear\t恐惧\n");
        const auto pairs = load_word_pairs(dir / "p.tsv");
        REQUIRE(pairs.size() == 2);
        CHECK(pairs[1].second == "恐惧");
        write_file_atomic(dir / "p.tsv", "x\ty\n");
        CHECK(read_file(dir / "p.tsv") == "x\ty\n");
        write_file_atomic(dir / "bad.tsv", "only-one-field\n");
        CHECK(code_of([&] { load_word_pairs(dir / "bad.tsv"); }) == ErrorCode::Format);
    }
}
