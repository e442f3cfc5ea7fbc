#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "emospace/dataio.hpp"
#include "emospace/gbm.hpp"
#include "emospace/lexicon.hpp"
#include "emospace/space.hpp"
#include "emospace/stats.hpp"

namespace emospace {

/// Min-max normalizes raw ratings onto [0, 1] using the declared bounds.
AffectiveLexicon normalize_ratings(AffectiveLexicon lexicon);

struct ExperimentOptions {
    std::size_t folds = 5;
    std::size_t seeds = 10;
    GbmParams gbm{.rounds = kDeskBoostRounds};
    std::size_t n_perm = 10000;
    double null_quantile = 0.95;
    std::uint64_t seed = 0;
};

/// One (condition, target) cell: folds x seeds held-out correlations.
struct ConditionResult {
    FeatureCondition condition = FeatureCondition::All;
    AffectTarget target = AffectTarget::Valence;
    std::size_t feature_count = 0;
    std::size_t items = 0;
    std::vector<double> r;                  // index = seed * folds + fold
    std::vector<double> null_thresholds;    // per model, same indexing
    double mean_r = 0.0;
    double sd_r = 0.0;
    double threshold = 0.0;                 // max of null_thresholds
    std::size_t degenerate_predictions = 0; // folds whose predictions were constant (r := 0)
};

struct ConditionComparison {
    AffectTarget target = AffectTarget::Valence;
    FeatureCondition a = FeatureCondition::All;
    FeatureCondition b = FeatureCondition::Intersection;
    stats::RankSumResult test;
    double p_bonferroni = 1.0;
};

struct ExperimentReport {
    std::string direction;  // "en", "zh", "en->zh", "zh->en"
    ExperimentOptions options;
    std::vector<ConditionResult> cells;          // every condition for every target
    std::vector<ConditionComparison> comparisons; // 3 pairs per target, Bonferroni m = 3

    const ConditionResult& cell(FeatureCondition condition, AffectTarget target) const;
};

inline constexpr std::array<FeatureCondition, 3> kAllConditions = {
    FeatureCondition::All, FeatureCondition::Intersection, FeatureCondition::Extra};

/// Aligned items for one experiment: features from the train side and test side of
/// each item (the same code for within-language runs) plus normalized ratings.
struct AffectItems {
    std::vector<std::string> keys;
    std::vector<const SparseFeatureVector*> train_codes;
    std::vector<const SparseFeatureVector*> test_codes;
    std::vector<double> train_y;
    std::vector<double> test_y;
};

AffectItems within_language_items(const AffectiveLexicon& lexicon, const WordVectors& vectors,
                                  AffectTarget target);

/// Items are the bilingual pairs whose words both have a rating and a feature vector.
AffectItems cross_language_items(const AffectiveLexicon& train_lexicon, const WordVectors& train_vectors,
                                 const AffectiveLexicon& test_lexicon, const WordVectors& test_vectors,
                                 std::span<const std::pair<std::string, std::string>> pairs,
                                 AffectTarget target);

/// Runs folds x seeds for one feature set.
ConditionResult run_condition(const AffectItems& items, std::span<const std::uint32_t> features,
                              FeatureCondition condition, AffectTarget target,
                              const ExperimentOptions& options);

ExperimentReport run_within_language(const AffectiveLexicon& lexicon, const WordVectors& vectors,
                                     const FeatureSetPartition& partition,
                                     std::span<const AffectTarget> targets,
                                     const ExperimentOptions& options);

ExperimentReport run_cross_language(const AffectiveLexicon& train_lexicon, const WordVectors& train_vectors,
                                    const AffectiveLexicon& test_lexicon, const WordVectors& test_vectors,
                                    std::span<const std::pair<std::string, std::string>> pairs,
                                    const FeatureSetPartition& partition,
                                    std::span<const AffectTarget> targets,
                                    const ExperimentOptions& options);

stats::RankSumResult compare_conditions(std::span<const double> a, std::span<const double> b,
                                        stats::Alternative alternative = stats::Alternative::TwoSided);

}  // namespace emospace
