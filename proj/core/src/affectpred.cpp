#include "emospace/affectpred.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "emospace/error.hpp"
#include "emospace/parallel.hpp"
#include "emospace/random.hpp"

namespace emospace {

namespace {

constexpr std::uint64_t kFoldStream = 0x666f6c64ULL;   // "fold"
constexpr std::uint64_t kModelStream = 0x6d6f646cULL;  // "modl"
constexpr std::uint64_t kNullStream = 0x6e756c6cULL;   // "null"

double normalize(double raw, double lo, double hi, const std::string& word) {
    if (raw < lo || raw > hi) {
        fail(ErrorCode::Range, "rating for '" + word + "' lies outside its declared bounds");
    }
    return (raw - lo) / (hi - lo);
}

}  // namespace

AffectiveLexicon normalize_ratings(AffectiveLexicon lexicon) {
    const RatingBounds& b = lexicon.bounds;
    if (!(b.valence_min < b.valence_max) || !(b.arousal_min < b.arousal_max)) {
        fail(ErrorCode::Degenerate, "rating bounds must satisfy min < max");
    }
    for (auto& [word, entry] : lexicon.entries) {
        entry.valence_norm = normalize(entry.valence_raw, b.valence_min, b.valence_max, word);
        entry.arousal_norm = normalize(entry.arousal_raw, b.arousal_min, b.arousal_max, word);
    }
    lexicon.normalized = true;
    return lexicon;
}

const ConditionResult& ExperimentReport::cell(FeatureCondition condition, AffectTarget target) const {
    for (const auto& c : cells) {
        if (c.condition == condition && c.target == target) return c;
    }
    fail(ErrorCode::InvalidArgument, "report has no cell for " + std::string(to_string(condition)) + "/" +
                                         std::string(to_string(target)));
}

AffectItems within_language_items(const AffectiveLexicon& lexicon, const WordVectors& vectors,
                                  AffectTarget target) {
    AffectItems items;
    for (const auto& [word, entry] : lexicon.entries) {
        const auto it = vectors.find(word);
        if (it == vectors.end()) continue;
        const double y = lexicon.normalized_value(word, target);
        items.keys.push_back(word);
        items.train_codes.push_back(&it->second);
        items.test_codes.push_back(&it->second);
        items.train_y.push_back(y);
        items.test_y.push_back(y);
    }
    return items;
}

AffectItems cross_language_items(const AffectiveLexicon& train_lexicon, const WordVectors& train_vectors,
                                 const AffectiveLexicon& test_lexicon, const WordVectors& test_vectors,
                                 std::span<const std::pair<std::string, std::string>> pairs,
                                 AffectTarget target) {
    AffectItems items;
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& [a, b] : pairs) {
        if (!seen.insert({a, b}).second) continue;
        const auto ta = train_vectors.find(a);
        const auto tb = test_vectors.find(b);
        if (ta == train_vectors.end() || tb == test_vectors.end()) continue;
        if (train_lexicon.find(a) == nullptr || test_lexicon.find(b) == nullptr) continue;
        items.keys.push_back(a + "\t" + b);
        items.train_codes.push_back(&ta->second);
        items.test_codes.push_back(&tb->second);
        items.train_y.push_back(train_lexicon.normalized_value(a, target));
        items.test_y.push_back(test_lexicon.normalized_value(b, target));
    }
    if (items.keys.empty()) fail(ErrorCode::InsufficientData, "bilingual join is empty");
    return items;
}

ConditionResult run_condition(const AffectItems& items, std::span<const std::uint32_t> features,
                              FeatureCondition condition, AffectTarget target,
                              const ExperimentOptions& options) {
    const std::size_t n = items.keys.size();
    if (options.folds < 2) fail(ErrorCode::InvalidArgument, "need at least 2 folds");
    if (options.seeds < 1) fail(ErrorCode::InvalidArgument, "need at least 1 seed");
    if (n < 10 * options.folds) {
        fail(ErrorCode::InsufficientData, "need at least " + std::to_string(10 * options.folds) +
                                              " rated words with activations, got " + std::to_string(n));
    }
    if (features.empty()) {
        fail(ErrorCode::InsufficientData, "feature set '" + std::string(to_string(condition)) + "' is empty");
    }

    ConditionResult result;
    result.condition = condition;
    result.target = target;
    result.feature_count = features.size();
    result.items = n;
    const std::size_t models = options.seeds * options.folds;
    result.r.assign(models, 0.0);
    result.null_thresholds.assign(models, 0.0);
    std::vector<char> degenerate(models, 0);

    // Fold assignment per seed: shuffled positions dealt round-robin.
    std::vector<std::vector<std::size_t>> fold_of(options.seeds, std::vector<std::size_t>(n));
    for (std::size_t s = 0; s < options.seeds; ++s) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(options.seed, kFoldStream, s));
        rng.shuffle(std::span(order));
        for (std::size_t k = 0; k < n; ++k) fold_of[s][order[k]] = k % options.folds;
    }

    parallel_for(models, [&](std::size_t model) {
        const std::size_t s = model / options.folds;
        const std::size_t f = model % options.folds;
        std::vector<const SparseFeatureVector*> train_x;
        std::vector<const SparseFeatureVector*> test_x;
        std::vector<double> train_y;
        std::vector<double> test_y;
        for (std::size_t i = 0; i < n; ++i) {
            if (fold_of[s][i] == f) {
                test_x.push_back(items.test_codes[i]);
                test_y.push_back(items.test_y[i]);
            } else {
                train_x.push_back(items.train_codes[i]);
                train_y.push_back(items.train_y[i]);
            }
        }
        GbmParams params = options.gbm;
        params.seed = derive_seed(options.seed, kModelStream, s);
        const GbmModel gbm = train_gbm(train_x, features, train_y, params);
        const std::vector<double> pred = predict_gbm(gbm, test_x, features);

        const bool constant = std::all_of(pred.begin(), pred.end(), [&](double v) { return v == pred[0]; });
        degenerate[model] = constant ? 1 : 0;
        result.r[model] = constant ? 0.0 : stats::pearson_r(pred, test_y);

        // Null: shuffle the held-out truth against fixed predictions.
        std::vector<double> null_r(options.n_perm);
        std::vector<double> shuffled = test_y;
        Rng rng(derive_seed(options.seed, kNullStream, model));
        for (std::size_t b = 0; b < options.n_perm; ++b) {
            rng.shuffle(std::span(shuffled));
            null_r[b] = constant ? 0.0 : stats::pearson_r(pred, shuffled);
        }
        result.null_thresholds[model] =
            options.n_perm == 0 ? 0.0 : stats::quantile(std::move(null_r), options.null_quantile);
    });

    result.degenerate_predictions = static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), 1));
    result.mean_r = stats::mean(result.r);
    result.sd_r = stats::stddev(result.r);
    result.threshold = *std::max_element(result.null_thresholds.begin(), result.null_thresholds.end());
    return result;
}

stats::RankSumResult compare_conditions(std::span<const double> a, std::span<const double> b,
                                        stats::Alternative alternative) {
    if (a.empty() || b.empty()) fail(ErrorCode::InsufficientData, "condition comparison needs non-empty samples");
    if (a.size() < 3 || b.size() < 3) {
        fail(ErrorCode::InsufficientData, "condition comparison needs at least 3 values per sample");
    }
    return stats::wilcoxon_rank_sum(a, b, alternative);
}

namespace {

void add_comparisons(ExperimentReport& report, AffectTarget target) {
    constexpr std::array<std::pair<FeatureCondition, FeatureCondition>, 3> kPairs = {{
        {FeatureCondition::All, FeatureCondition::Intersection},
        {FeatureCondition::All, FeatureCondition::Extra},
        {FeatureCondition::Intersection, FeatureCondition::Extra},
    }};
    for (const auto& [a, b] : kPairs) {
        ConditionComparison cmp;
        cmp.target = target;
        cmp.a = a;
        cmp.b = b;
        cmp.test = compare_conditions(report.cell(a, target).r, report.cell(b, target).r);
        cmp.p_bonferroni = stats::bonferroni(cmp.test.p, kPairs.size());
        report.comparisons.push_back(cmp);
    }
}

void run_cells(ExperimentReport& report, const AffectItems& items, const FeatureSetPartition& partition,
               AffectTarget target) {
    IndexSet all_storage;
    for (FeatureCondition condition : kAllConditions) {
        const IndexSet& features = select(partition, condition, all_storage);
        report.cells.push_back(run_condition(items, features, condition, target, report.options));
    }
    add_comparisons(report, target);
}

}  // namespace

ExperimentReport run_within_language(const AffectiveLexicon& lexicon, const WordVectors& vectors,
                                     const FeatureSetPartition& partition,
                                     std::span<const AffectTarget> targets,
                                     const ExperimentOptions& options) {
    ExperimentReport report;
    report.direction = std::string(to_string(lexicon.language));
    report.options = options;
    for (AffectTarget target : targets) {
        run_cells(report, within_language_items(lexicon, vectors, target), partition, target);
    }
    return report;
}

ExperimentReport run_cross_language(const AffectiveLexicon& train_lexicon, const WordVectors& train_vectors,
                                    const AffectiveLexicon& test_lexicon, const WordVectors& test_vectors,
                                    std::span<const std::pair<std::string, std::string>> pairs,
                                    const FeatureSetPartition& partition,
                                    std::span<const AffectTarget> targets,
                                    const ExperimentOptions& options) {
    ExperimentReport report;
    report.direction =
        std::string(to_string(train_lexicon.language)) + "->" + std::string(to_string(test_lexicon.language));
    report.options = options;
    for (AffectTarget target : targets) {
        const AffectItems items =
            cross_language_items(train_lexicon, train_vectors, test_lexicon, test_vectors, pairs, target);
        run_cells(report, items, partition, target);
    }
    return report;
}

}  // namespace emospace
