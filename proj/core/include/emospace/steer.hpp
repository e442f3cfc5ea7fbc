#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "emospace/concepts.hpp"
#include "emospace/dataio.hpp"
#include "emospace/matrix.hpp"
#include "emospace/sae.hpp"

namespace emospace {

/// k x L non-negative matrix whose rows are concept-word codes over the dictionary.
struct EmotionActivationMatrix {
    std::string emotion;
    std::vector<std::string> words;
    MatrixD values;
};

EmotionActivationMatrix build_activation_matrix(const ConceptSet& concept_set,
                                                const WordVectors& word_vectors, std::size_t width);

struct NmfOptions {
    std::size_t components = 1;  // C
    std::size_t iterations = 500;
    std::uint64_t seed = 0;
};

struct NmfFactors {
    MatrixD w;  // k x C
    MatrixD h;  // C x L
    std::size_t iterations = 0;
    /// Set when an update failed to lower the error and the previous factors were kept.
    bool converged = false;
    /// Frobenius error of the initialization and after each accepted iteration.
    std::vector<double> error_trace;

    double error() const noexcept { return error_trace.empty() ? 0.0 : error_trace.back(); }
};

/// Lee-Seung multiplicative updates for min ||S - W H||_F with W, H >= 0. Stops early
/// once an update no longer lowers the error.
NmfFactors nmf(const MatrixD& s, const NmfOptions& options);

double frobenius_error(const MatrixD& s, const MatrixD& w, const MatrixD& h);

inline constexpr std::string_view kRankingRule = "energy-rank/max-coefficient-pool/v1";

struct SalientFeatures {
    std::vector<std::size_t> component_ranking;  // all components, best first
    std::vector<std::uint32_t> features;         // top-F, best first
    std::vector<double> scores;                  // max H coefficient per selected feature
};

/// Ranks components by (sum of W column) x (sum of H row), pools the top-M rows of H,
/// scores each feature by its maximum coefficient there and keeps the top F.
/// Ties go to the lower component / feature index.
SalientFeatures select_salient_features(const NmfFactors& factors, std::size_t top_components,
                                        std::size_t features);

struct SteeringVector {
    std::string emotion;
    Language language = Language::En;
    std::vector<std::uint32_t> feature_indices;  // ascending
    std::vector<float> dense_sum;                // sum of decoder columns
    SteeringProvenance provenance;
};

/// Unweighted sum of the decoder columns at `indices`.
SteeringVector compile_steering_vector(const SaeModel& sae, std::span<const std::uint32_t> indices);

/// T' = T + coeff * 1_p dense_sum^T; each element is formed in double and rounded to float once.
/// coeff == 0 returns T unchanged.
MatrixF apply_steering(const MatrixF& hidden_states, std::span<const float> dense_sum, double coeff);
MatrixF apply_steering(const MatrixF& hidden_states, const SteeringVector& vector, double coeff);

SteeringBundle to_bundle(const SteeringVector& vector, const SaeModel& sae);
SteeringVector from_bundle(const SteeringBundle& bundle);

/// Checks the bundle against the SAE: shapes, indices, and that the recomputed column
/// sum reproduces dense_sum to `tolerance` relative error.
void verify_bundle(const SteeringBundle& bundle, const SaeModel& sae, double tolerance = 1e-6);

struct SteeringCompileOptions {
    std::size_t components = 0;      // 0 = min(k, 10)
    std::size_t top_components = 0;  // M; 0 = all components
    std::size_t features = 40;       // F
    std::size_t nmf_iterations = 500;
    std::uint64_t seed = 0;
};

/// Concept set -> activation matrix -> NMF -> salient features -> steering vector.
SteeringVector compile_emotion_steering(const SaeModel& sae, const ConceptSet& concept_set,
                                        const WordVectors& word_vectors,
                                        const SteeringCompileOptions& options);

}  // namespace emospace
