#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "emospace/matrix.hpp"
#include "emospace/sparse.hpp"

namespace emospace {

/// Squared-error gradient boosting with histogram split finding and leaf-wise growth.
struct GbmParams {
    double learning_rate = 0.01;
    std::size_t num_leaves = 31;
    std::size_t rounds = 2000;
    std::size_t max_bins = 255;
    std::size_t min_data_in_leaf = 20;
    double feature_fraction = 1.0;
    double bagging_fraction = 1.0;
    std::uint64_t seed = 0;
};

inline constexpr std::size_t kPaperBoostRounds = 2000;
inline constexpr std::size_t kDeskBoostRounds = 200;

struct TreeNode {
    // Internal nodes: rows with value <= threshold go left.
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;         // leaf output before shrinkage
};

struct RegressionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    std::size_t leaf_count() const noexcept;
    double predict(std::span<const double> row) const noexcept;
};

struct GbmModel {
    GbmParams params;
    std::size_t feature_count = 0;
    double base_prediction = 0.0;
    std::vector<RegressionTree> trees;
    bool constant_target = false;
    /// Training-set MSE before the first round and after each round.
    std::vector<double> train_mse;
};

GbmModel train_gbm(const MatrixD& features, std::span<const double> targets, const GbmParams& params);

/// Trains on sparse codes restricted to `feature_indices` without materializing the
/// dense design matrix.
GbmModel train_gbm(std::span<const SparseFeatureVector* const> rows,
                   std::span<const std::uint32_t> feature_indices, std::span<const double> targets,
                   const GbmParams& params);

std::vector<double> predict_gbm(const GbmModel& model, const MatrixD& features);
std::vector<double> predict_gbm(const GbmModel& model, std::span<const SparseFeatureVector* const> rows,
                                std::span<const std::uint32_t> feature_indices);

}  // namespace emospace
