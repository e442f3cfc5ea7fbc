#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "emospace/concepts.hpp"
#include "emospace/matrix.hpp"
#include "emospace/stats.hpp"

namespace emospace {

using IndexSet = std::vector<std::uint32_t>;  // sorted, unique

/// Union of the supports of a concept set's member words.
struct EmotionSubspace {
    EmotionLabel emotion;
    Language lang = Language::En;
    std::size_t width = 0;
    IndexSet feature_indices;
    std::vector<std::string> words;
};

struct EmotionSpace {
    Language lang = Language::En;
    std::size_t width = 0;
    std::vector<EmotionSubspace> subspaces;
    IndexSet union_indices;
};

/// The feature sets compared in the prediction experiments.
struct FeatureSetPartition {
    std::size_t width = 0;
    IndexSet intersection;  // EN ∩ CH
    IndexSet set_union;     // EN ∪ CH
    IndexSet extra;         // complement of the union in [0, width)

    IndexSet all() const;
};

enum class FeatureCondition { All, Intersection, Extra };

std::string_view to_string(FeatureCondition condition) noexcept;
FeatureCondition parse_feature_condition(std::string_view name);
const IndexSet& select(const FeatureSetPartition& partition, FeatureCondition condition,
                       IndexSet& all_storage);

EmotionSubspace build_subspace(const ConceptSet& concept_set, const WordVectors& word_vectors);
EmotionSpace build_space(std::vector<EmotionSubspace> subspaces);
FeatureSetPartition partition_feature_sets(const EmotionSpace& en, const EmotionSpace& zh);

IndexSet set_union(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);
IndexSet set_intersection(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);

/// Values of `code` at the positions of `indices` (zeros where the code is inactive).
std::vector<double> restrict_to(const SparseFeatureVector& code, std::span<const std::uint32_t> indices);

/// Stacks restricted codes into an n x |indices| matrix.
MatrixD restrict_rows(std::span<const SparseFeatureVector* const> codes,
                      std::span<const std::uint32_t> indices);

// ---------------------------------------------------------------------------
// Cluster validity
// ---------------------------------------------------------------------------

/// Mean over clusters of max_j (s_i + s_j) / d(c_i, c_j), where s is the mean
/// Euclidean distance of members to their centroid.
double davies_bouldin(const MatrixD& points, std::span<const int> labels);

/// (BSS / (k - 1)) / (WSS / (n - k)); +infinity when WSS == 0.
double calinski_harabasz(const MatrixD& points, std::span<const int> labels);

struct LogRegOptions {
    std::size_t folds = 5;
    double l2 = 1e-4;
    std::size_t iterations = 300;
    std::uint64_t seed = 0;
};

/// Mean held-out accuracy of multinomial logistic regression over stratified folds.
double cv_logreg_accuracy(const MatrixD& points, std::span<const int> labels,
                          const LogRegOptions& options = {});

enum class ClusterMetric { DaviesBouldin, CalinskiHarabasz, LogRegAccuracy };

std::string_view to_string(ClusterMetric metric) noexcept;
stats::Tail better_direction(ClusterMetric metric) noexcept;

double cluster_metric(ClusterMetric metric, const MatrixD& points, std::span<const int> labels,
                      const LogRegOptions& logreg = {});

/// Shuffles labels n_perm times; p = (1 + #null at least as good as observed) / (1 + n_perm).
stats::PermutationResult cluster_permutation_test(ClusterMetric metric, const MatrixD& points,
                                                  std::span<const int> labels,
                                                  std::size_t n_perm, std::uint64_t seed,
                                                  const LogRegOptions& logreg = {});

/// Stratified fold assignment: members of each class are shuffled and dealt round-robin.
std::vector<std::size_t> stratified_folds(std::span<const int> labels, std::size_t folds,
                                          std::uint64_t seed);

}  // namespace emospace
