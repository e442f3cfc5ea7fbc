#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "emospace/lexicon.hpp"
#include "emospace/matrix.hpp"
#include "emospace/stats.hpp"

namespace emospace {

/// Label-supervised contrastive embedding into 3 dimensions: a linear encoder
/// followed by L2 normalization, trained with InfoNCE. Stands in for a CEBRA-style
/// network encoder.
struct EmbeddingConfig {
    std::size_t steps = 50000;
    std::size_t batch_size = 512;
    double learning_rate = 1e-2;
    double temperature = 1.0;
    std::uint64_t seed = 0;
    /// Steps per entry of the loss trace.
    std::size_t trace_interval = 100;
};

inline constexpr std::size_t kEmbeddingDims = 3;

struct EmbeddingModel {
    MatrixD projection;  // 3 x m
    double temperature = 1.0;
    EmbeddingConfig config;
    std::vector<double> loss_trace;  // mean batch loss per trace interval

    std::size_t input_dim() const noexcept { return projection.cols(); }
};

/// Seeded random initialization, N(0, 1/m) entries.
MatrixD initial_projection(std::size_t input_dim, std::uint64_t seed);

struct InfoNceBatch {
    std::vector<std::size_t> anchors;
    std::vector<std::size_t> positives;  // positives[i] shares anchors[i]'s label
};

/// Mean InfoNCE loss of a batch and its analytic gradient w.r.t. the projection.
/// For anchor i the candidates are the batch positives; c_ij is the cosine between
/// the normalized projections of anchor i and positive j.
double infonce_loss(const MatrixD& projection, const MatrixD& inputs, const InfoNceBatch& batch,
                    double temperature, MatrixD* gradient = nullptr);

EmbeddingModel train_embedding(const MatrixD& inputs, std::span<const int> labels,
                               const EmbeddingConfig& config = {});

struct Embedding {
    MatrixD points;                       // n x 3, unit rows
    std::vector<std::size_t> zero_rows;   // rows whose projection had zero norm (left at 0)
};

Embedding embed(const EmbeddingModel& model, const MatrixD& inputs);

struct AxisCorrelation {
    std::size_t dimension = 0;  // 0-based
    AffectTarget target = AffectTarget::Valence;
    double r = 0.0;
    double p = 1.0;
    double p_bonferroni = 1.0;
};

struct AxisCorrelationReport {
    std::size_t matched_words = 0;
    std::vector<AxisCorrelation> entries;  // 3 dims x (valence, arousal)
};

/// Correlates each embedding axis with the lexicon's raw ratings over the words that
/// have an entry. Bonferroni over the 6 tests.
AxisCorrelationReport axis_affect_correlation(const MatrixD& points, const AffectiveLexicon& lexicon,
                                              std::span<const std::string> words);

}  // namespace emospace
