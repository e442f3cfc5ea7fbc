#include <doctest.h>

#include <cmath>

#include "emospace/error.hpp"
#include "emospace/sae.hpp"
#include "test_support.hpp"

using namespace emospace;
using emospace::testing::random_code;
using emospace::testing::random_sae;
using emospace::testing::random_vector;

namespace {

SaeModel hand_sae() {
    // d = 2, L = 3: W_enc = [[1,0],[0,1],[1,1]], b = 0, theta = 0.5.
    SaeModel sae;
    sae.encoder = MatrixF(3, 2, {1, 0, 0, 1, 1, 1});
    sae.encoder_bias = {0, 0, 0};
    sae.decoder = MatrixF(2, 3, {1, 0, 1, 0, 1, 1});
    sae.threshold = {0.5f, 0.5f, 0.5f};
    return sae;
}

}  // namespace

TEST_SUITE("sae") {
    TEST_CASE("encode applies the JumpReLU threshold to hand-computed pre-activations") {
        const SaeModel sae = hand_sae();
        const std::vector<float> x{1.0f, 0.2f};
        const SparseFeatureVector z = encode(sae, x);
        CHECK(z.width == 3);
        CHECK(z.indices == std::vector<std::uint32_t>{0, 2});
        CHECK(z.values == std::vector<float>{1.0f, 1.2f});
    }

    TEST_CASE("zero input with zero bias yields an empty code") {
        SaeModel sae = hand_sae();
        sae.threshold = {0.1f, 0.1f, 0.1f};
        const std::vector<float> x{0.0f, 0.0f};
        CHECK(encode(sae, x).empty());
    }

    TEST_CASE("pre-activation exactly at the threshold is dropped") {
        const SaeModel sae = hand_sae();
        const std::vector<float> x{0.5f, 0.0f};  // pre-activations (0.5, 0, 0.5)
        CHECK(encode(sae, x).empty());
    }

    TEST_CASE("theta = 0 keeps exactly the positive pre-activations") {
        Rng rng(7);
        SaeModel sae = random_sae(rng, 6, 24, 0.0f);
        for (int t = 0; t < 20; ++t) {
            const auto x = random_vector(rng, 6);
            const auto z = encode(sae, x);
            std::size_t k = 0;
            for (std::size_t i = 0; i < 24; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < 6; ++j) acc += static_cast<double>(sae.encoder(i, j)) * x[j];
                const auto pre = static_cast<float>(acc + sae.encoder_bias[i]);
                if (pre > 0.0f) {
                    REQUIRE(k < z.nnz());
                    CHECK(z.indices[k] == i);
                    CHECK(z.values[k] == pre);
                    ++k;
                }
            }
            CHECK(k == z.nnz());
        }
    }

    TEST_CASE("encode rejects wrong length and non-finite input") {
        const SaeModel sae = hand_sae();
        const std::vector<float> short_x{1.0f};
        CHECK_THROWS_AS(encode(sae, short_x), Error);
        const std::vector<float> nan_x{NAN, 0.0f};
        CHECK_THROWS_AS(encode(sae, nan_x), Error);
    }

    TEST_CASE("decode sums scaled decoder columns") {
        SaeModel sae;
        sae.encoder = MatrixF(4, 3, 1.0f);
        sae.encoder_bias.assign(4, 0.0f);
        sae.threshold.assign(4, 0.0f);
        sae.decoder = MatrixF(3, 4, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0});
        SparseFeatureVector z{4, {0, 2}, {2.0f, 3.0f}};
        CHECK(decode(sae, z) == std::vector<float>{2.0f, 0.0f, 3.0f});
        CHECK(decode(sae, SparseFeatureVector{4, {}, {}}) == std::vector<float>{0.0f, 0.0f, 0.0f});
        CHECK_THROWS_AS(decode(sae, SparseFeatureVector{5, {}, {}}), Error);
    }

    TEST_CASE("decode is homogeneous: decode(2.5 z) == 2.5 decode(z)") {
        Rng rng(11);
        const SaeModel sae = random_sae(rng, 8, 32);
        for (int t = 0; t < 10; ++t) {
            SparseFeatureVector z = random_code(rng, 32, 0.3);
            SparseFeatureVector scaled = z;
            for (float& v : scaled.values) v *= 2.5f;
            const auto a = decode(sae, z);
            const auto b = decode(sae, scaled);
            for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(2.5 * a[i]).epsilon(1e-6));
        }
    }

    TEST_CASE("mean pooling encodes the average token state; last pooling the final row") {
        SaeModel sae = hand_sae();
        sae.threshold = {0.0f, 0.0f, 0.0f};
        const MatrixF tokens(2, 2, {1, 0, 0, 1});
        const std::vector<float> mean{0.5f, 0.5f};
        CHECK(word_feature_vector(sae, tokens) == encode(sae, mean));
        const MatrixF three(3, 2, {1, 0, 0, 1, 2, 3});
        const std::vector<float> last{2.0f, 3.0f};
        CHECK(word_feature_vector(sae, three, Pooling::Last) == encode(sae, last));
        const MatrixF one(1, 2, {0.7f, 0.9f});
        CHECK(word_feature_vector(sae, one) == encode(sae, one.row(0)));
        CHECK_THROWS_AS(word_feature_vector(sae, MatrixF(0, 2)), Error);
        CHECK_THROWS_AS(word_feature_vector(sae, MatrixF(1, 3)), Error);
    }

    TEST_CASE("cosine similarity examples and properties") {
        const SparseFeatureVector a{3, {0, 2}, {1, 1}};
        const SparseFeatureVector b{3, {0, 1}, {1, 1}};
        CHECK(cosine_similarity(a, b) == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
        const SparseFeatureVector c{3, {1}, {4}};
        const SparseFeatureVector d{3, {0, 2}, {3, 2}};
        CHECK(cosine_similarity(c, d) == 0.0);
        SparseFeatureVector a2 = a;
        for (float& v : a2.values) v *= 3.0f;
        CHECK(cosine_similarity(a2, b) == doctest::Approx(cosine_similarity(a, b)));
        CHECK(cosine_similarity(a, b) == cosine_similarity(b, a));
        CHECK_THROWS_AS(cosine_similarity(a, SparseFeatureVector{3, {}, {}}), Error);
        CHECK_THROWS_AS(cosine_similarity(a, SparseFeatureVector{4, {0}, {1}}), Error);
    }

    TEST_CASE("SaeModel::validate enforces shapes, thresholds and L > d") {
        SaeModel sae = hand_sae();
        CHECK_NOTHROW(sae.validate());
        SaeModel bad = sae;
        bad.threshold[1] = -0.1f;
        CHECK_THROWS_AS(bad.validate(), Error);
        SaeModel square;
        square.encoder = MatrixF(2, 2);
        square.encoder_bias.assign(2, 0);
        square.decoder = MatrixF(2, 2);
        square.threshold.assign(2, 0);
        CHECK_THROWS_AS(square.validate(), Error);
    }

    TEST_CASE("SparseFeatureVector::validate rejects unordered indices and non-positive values") {
        CHECK_THROWS_AS((SparseFeatureVector{4, {2, 1}, {1, 1}}.validate()), Error);
        CHECK_THROWS_AS((SparseFeatureVector{4, {1}, {0}}.validate()), Error);
        CHECK_THROWS_AS((SparseFeatureVector{4, {4}, {1}}.validate()), Error);
        CHECK_NOTHROW((SparseFeatureVector{4, {0, 3}, {1, 2}}.validate()));
    }

    TEST_CASE("encode_batch matches row-by-row encode") {
        Rng rng(3);
        const SaeModel sae = random_sae(rng, 5, 20);
        MatrixF states(7, 5);
        for (float& v : states.data()) v = static_cast<float>(rng.normal());
        const auto batch = encode_batch(sae, states);
        for (std::size_t r = 0; r < states.rows(); ++r) CHECK(batch[r] == encode(sae, states.row(r)));
    }
}
