#include "emospace/space.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "emospace/error.hpp"
#include "emospace/random.hpp"

namespace emospace {

std::string_view to_string(FeatureCondition condition) noexcept {
    switch (condition) {
        case FeatureCondition::All: return "all";
        case FeatureCondition::Intersection: return "intersection";
        case FeatureCondition::Extra: return "extra";
    }
    return "unknown";
}

FeatureCondition parse_feature_condition(std::string_view name) {
    if (name == "all") return FeatureCondition::All;
    if (name == "intersection") return FeatureCondition::Intersection;
    if (name == "extra") return FeatureCondition::Extra;
    fail(ErrorCode::InvalidArgument, "unknown feature condition '" + std::string(name) + "'");
}

IndexSet FeatureSetPartition::all() const {
    IndexSet out(width);
    std::iota(out.begin(), out.end(), 0u);
    return out;
}

const IndexSet& select(const FeatureSetPartition& partition, FeatureCondition condition, IndexSet& all_storage) {
    switch (condition) {
        case FeatureCondition::Intersection: return partition.intersection;
        case FeatureCondition::Extra: return partition.extra;
        case FeatureCondition::All: break;
    }
    all_storage = partition.all();
    return all_storage;
}

IndexSet set_union(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
    IndexSet out;
    out.reserve(a.size() + b.size());
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

IndexSet set_intersection(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
    IndexSet out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

EmotionSubspace build_subspace(const ConceptSet& concept_set, const WordVectors& word_vectors) {
    if (concept_set.words.empty()) {
        fail(ErrorCode::InsufficientData, "empty concept set for '" + std::string(concept_set.emotion.key) + "'");
    }
    EmotionSubspace sub{concept_set.emotion, concept_set.lang, 0, {}, {}};
    for (const auto& sw : concept_set.words) {
        const auto it = word_vectors.find(sw.word);
        if (it == word_vectors.end()) fail(ErrorCode::InvalidArgument, "concept word '" + sw.word + "' has no vector");
        if (sub.width == 0) sub.width = it->second.width;
        if (it->second.width != sub.width) fail(ErrorCode::Shape, "concept words have codes of different widths");
        sub.feature_indices = set_union(sub.feature_indices, it->second.indices);
        sub.words.push_back(sw.word);
    }
    return sub;
}

EmotionSpace build_space(std::vector<EmotionSubspace> subspaces) {
    if (subspaces.empty()) fail(ErrorCode::InsufficientData, "an emotion space needs at least one subspace");
    EmotionSpace space;
    space.lang = subspaces.front().lang;
    space.width = subspaces.front().width;
    std::set<int> seen;
    for (const auto& s : subspaces) {
        if (s.lang != space.lang || s.width != space.width) {
            fail(ErrorCode::InvalidArgument, "subspaces mix languages or dictionary widths");
        }
        if (!seen.insert(s.emotion.index).second) {
            fail(ErrorCode::Duplicate, "duplicate subspace for '" + std::string(s.emotion.key) + "'");
        }
        space.union_indices = set_union(space.union_indices, s.feature_indices);
    }
    std::sort(subspaces.begin(), subspaces.end(),
              [](const auto& a, const auto& b) { return a.emotion.index < b.emotion.index; });
    space.subspaces = std::move(subspaces);
    return space;
}

FeatureSetPartition partition_feature_sets(const EmotionSpace& en, const EmotionSpace& zh) {
    if (en.width != zh.width) fail(ErrorCode::Shape, "emotion spaces come from dictionaries of different widths");
    FeatureSetPartition p;
    p.width = en.width;
    p.intersection = set_intersection(en.union_indices, zh.union_indices);
    p.set_union = set_union(en.union_indices, zh.union_indices);
    p.extra.reserve(p.width - p.set_union.size());
    std::size_t j = 0;
    for (std::uint32_t i = 0; i < p.width; ++i) {
        if (j < p.set_union.size() && p.set_union[j] == i) {
            ++j;
        } else {
            p.extra.push_back(i);
        }
    }
    return p;
}

std::vector<double> restrict_to(const SparseFeatureVector& code, std::span<const std::uint32_t> indices) {
    std::vector<double> out(indices.size(), 0.0);
    std::size_t a = 0;
    for (std::size_t b = 0; b < indices.size() && a < code.indices.size(); ++b) {
        while (a < code.indices.size() && code.indices[a] < indices[b]) ++a;
        if (a < code.indices.size() && code.indices[a] == indices[b]) out[b] = code.values[a];
    }
    return out;
}

MatrixD restrict_rows(std::span<const SparseFeatureVector* const> codes, std::span<const std::uint32_t> indices) {
    MatrixD out(codes.size(), indices.size());
    for (std::size_t r = 0; r < codes.size(); ++r) {
        const auto row = restrict_to(*codes[r], indices);
        std::copy(row.begin(), row.end(), out.row(r).begin());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cluster validity
// ---------------------------------------------------------------------------

namespace {

struct Clusters {
    std::vector<std::size_t> id;  // dense cluster id per point
    std::size_t count = 0;
    std::vector<std::size_t> sizes;
};

Clusters dense_clusters(std::span<const int> labels) {
    std::map<int, std::size_t> ids;
    for (int l : labels) ids.emplace(l, 0);
    std::size_t next = 0;
    for (auto& [label, id] : ids) id = next++;
    Clusters c;
    c.count = ids.size();
    c.sizes.assign(c.count, 0);
    c.id.reserve(labels.size());
    for (int l : labels) {
        c.id.push_back(ids[l]);
        ++c.sizes[ids[l]];
    }
    return c;
}

MatrixD centroids(const MatrixD& points, const Clusters& c) {
    MatrixD cent(c.count, points.cols(), 0.0);
    for (std::size_t i = 0; i < points.rows(); ++i) {
        auto dst = cent.row(c.id[i]);
        const auto src = points.row(i);
        for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
    }
    for (std::size_t k = 0; k < c.count; ++k) {
        for (double& v : cent.row(k)) v /= static_cast<double>(c.sizes[k]);
    }
    return cent;
}

double distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    return std::sqrt(s);
}

void check_points(const MatrixD& points, std::span<const int> labels) {
    if (points.rows() != labels.size()) fail(ErrorCode::Shape, "cluster labels do not match point count");
}

}  // namespace

double davies_bouldin(const MatrixD& points, std::span<const int> labels) {
    check_points(points, labels);
    const Clusters c = dense_clusters(labels);
    if (c.count < 2) fail(ErrorCode::InsufficientData, "Davies-Bouldin needs at least 2 clusters");
    const MatrixD cent = centroids(points, c);
    std::vector<double> scatter(c.count, 0.0);
    for (std::size_t i = 0; i < points.rows(); ++i) scatter[c.id[i]] += distance(points.row(i), cent.row(c.id[i]));
    for (std::size_t k = 0; k < c.count; ++k) scatter[k] /= static_cast<double>(c.sizes[k]);
    double total = 0.0;
    for (std::size_t a = 0; a < c.count; ++a) {
        double worst = 0.0;
        for (std::size_t b = 0; b < c.count; ++b) {
            if (a == b) continue;
            const double d = distance(cent.row(a), cent.row(b));
            if (d == 0.0) fail(ErrorCode::Degenerate, "Davies-Bouldin: two clusters share a centroid");
            worst = std::max(worst, (scatter[a] + scatter[b]) / d);
        }
        total += worst;
    }
    return total / static_cast<double>(c.count);
}

double calinski_harabasz(const MatrixD& points, std::span<const int> labels) {
    check_points(points, labels);
    const Clusters c = dense_clusters(labels);
    const std::size_t n = points.rows();
    if (c.count < 2 || c.count >= n) fail(ErrorCode::InsufficientData, "Calinski-Harabasz needs 2 <= k < n");
    const MatrixD cent = centroids(points, c);
    std::vector<double> overall(points.cols(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = points.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) overall[j] += row[j];
    }
    for (double& v : overall) v /= static_cast<double>(n);
    double bss = 0.0;
    for (std::size_t k = 0; k < c.count; ++k) {
        const double d = distance(cent.row(k), overall);
        bss += static_cast<double>(c.sizes[k]) * d * d;
    }
    double wss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = distance(points.row(i), cent.row(c.id[i]));
        wss += d * d;
    }
    if (wss == 0.0) return std::numeric_limits<double>::infinity();
    return (bss / static_cast<double>(c.count - 1)) / (wss / static_cast<double>(n - c.count));
}

std::vector<std::size_t> stratified_folds(std::span<const int> labels, std::size_t folds, std::uint64_t seed) {
    if (folds < 2) fail(ErrorCode::InvalidArgument, "cross-validation needs at least 2 folds");
    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
    std::vector<std::size_t> fold(labels.size(), 0);
    std::size_t offset = 0;
    std::uint64_t class_index = 0;
    for (auto& [label, idx] : members) {
        if (idx.size() < folds) {
            fail(ErrorCode::InsufficientData, "class " + std::to_string(label) + " has " + std::to_string(idx.size()) +
                                                  " members, fewer than " + std::to_string(folds) + " folds");
        }
        Rng rng(derive_seed(seed, 0x666f6c64ULL, class_index++));
        rng.shuffle(std::span(idx));
        for (std::size_t p = 0; p < idx.size(); ++p) fold[idx[p]] = (offset + p) % folds;
        offset = (offset + idx.size()) % folds;
    }
    return fold;
}

namespace {

/// Multinomial logistic regression on standardized features, fitted by Nesterov-
/// accelerated gradient descent with step 1 / (0.5 |X|_2^2 / n + l2).
class SoftmaxRegression {
public:
    SoftmaxRegression(const MatrixD& x, std::span<const std::size_t> y, std::size_t classes, double l2,
                      std::size_t iterations) {
        const std::size_t n = x.rows();
        const std::size_t m = x.cols();
        classes_ = classes;
        mean_.assign(m, 0.0);
        scale_.assign(m, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) mean_[j] += x(i, j);
        }
        for (double& v : mean_) v /= static_cast<double>(n);
        std::vector<double> var(m, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) var[j] += (x(i, j) - mean_[j]) * (x(i, j) - mean_[j]);
        }
        for (std::size_t j = 0; j < m; ++j) {
            const double sd = std::sqrt(var[j] / static_cast<double>(n));
            scale_[j] = sd > 0.0 ? sd : 1.0;
        }
        MatrixD z(n, m + 1, 1.0);  // last column is the intercept
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) z(i, j) = (x(i, j) - mean_[j]) / scale_[j];
        }
        const double lipschitz = 0.5 * spectral_norm_sq(z) / static_cast<double>(n) + l2;
        const double step = 1.0 / lipschitz;

        weights_ = MatrixD(classes, m + 1, 0.0);
        MatrixD previous = weights_;
        MatrixD look = weights_;
        MatrixD grad(classes, m + 1);
        std::vector<double> prob(classes);
        double t = 1.0;
        for (std::size_t it = 0; it < iterations; ++it) {
            std::fill(grad.data().begin(), grad.data().end(), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                softmax(look, z.row(i), prob);
                prob[y[i]] -= 1.0;
                for (std::size_t k = 0; k < classes; ++k) {
                    const double g = prob[k] / static_cast<double>(n);
                    if (g == 0.0) continue;
                    auto grow = grad.row(k);
                    const auto zrow = z.row(i);
                    for (std::size_t j = 0; j <= m; ++j) grow[j] += g * zrow[j];
                }
            }
            for (std::size_t k = 0; k < classes; ++k) {
                for (std::size_t j = 0; j < m; ++j) grad(k, j) += l2 * look(k, j);
            }
            const double t_next = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
            const double momentum = (t - 1.0) / t_next;
            for (std::size_t q = 0; q < weights_.size(); ++q) {
                const double updated = look.data()[q] - step * grad.data()[q];
                look.data()[q] = updated + momentum * (updated - previous.data()[q]);
                previous.data()[q] = updated;
            }
            t = t_next;
        }
        weights_ = previous;
    }

    std::size_t predict(std::span<const double> x) const {
        std::vector<double> z(x.size() + 1, 1.0);
        for (std::size_t j = 0; j < x.size(); ++j) z[j] = (x[j] - mean_[j]) / scale_[j];
        std::size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < classes_; ++k) {
            const auto w = weights_.row(k);
            double s = 0.0;
            for (std::size_t j = 0; j < z.size(); ++j) s += w[j] * z[j];
            if (s > best_score) {
                best_score = s;
                best = k;
            }
        }
        return best;
    }

private:
    static void softmax(const MatrixD& w, std::span<const double> z, std::vector<double>& out) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < w.rows(); ++k) {
            const auto row = w.row(k);
            double s = 0.0;
            for (std::size_t j = 0; j < z.size(); ++j) s += row[j] * z[j];
            out[k] = s;
            mx = std::max(mx, s);
        }
        double total = 0.0;
        for (double& v : out) {
            v = std::exp(v - mx);
            total += v;
        }
        for (double& v : out) v /= total;
    }

    static double spectral_norm_sq(const MatrixD& z) {
        std::vector<double> v(z.cols(), 1.0 / std::sqrt(static_cast<double>(z.cols())));
        std::vector<double> zv(z.rows());
        double estimate = 0.0;
        for (int it = 0; it < 50; ++it) {
            for (std::size_t i = 0; i < z.rows(); ++i) {
                const auto row = z.row(i);
                double s = 0.0;
                for (std::size_t j = 0; j < row.size(); ++j) s += row[j] * v[j];
                zv[i] = s;
            }
            std::vector<double> next(z.cols(), 0.0);
            for (std::size_t i = 0; i < z.rows(); ++i) {
                const auto row = z.row(i);
                for (std::size_t j = 0; j < row.size(); ++j) next[j] += row[j] * zv[i];
            }
            double norm = 0.0;
            for (double q : next) norm += q * q;
            norm = std::sqrt(norm);
            if (norm == 0.0) return 1.0;
            estimate = norm;
            for (std::size_t j = 0; j < next.size(); ++j) v[j] = next[j] / norm;
        }
        // Power iteration approaches from below; pad so the step stays safe.
        return 1.05 * estimate;
    }

    std::size_t classes_ = 0;
    std::vector<double> mean_;
    std::vector<double> scale_;
    MatrixD weights_;
};

}  // namespace

double cv_logreg_accuracy(const MatrixD& points, std::span<const int> labels, const LogRegOptions& options) {
    check_points(points, labels);
    const Clusters c = dense_clusters(labels);
    if (c.count < 2) fail(ErrorCode::InsufficientData, "classification needs at least 2 classes");
    const std::vector<std::size_t> fold = stratified_folds(labels, options.folds, options.seed);
    double accuracy_sum = 0.0;
    for (std::size_t f = 0; f < options.folds; ++f) {
        std::vector<std::size_t> train;
        std::vector<std::size_t> test;
        for (std::size_t i = 0; i < points.rows(); ++i) (fold[i] == f ? test : train).push_back(i);
        MatrixD xtrain(train.size(), points.cols());
        std::vector<std::size_t> ytrain(train.size());
        for (std::size_t r = 0; r < train.size(); ++r) {
            std::copy_n(points.row(train[r]).begin(), points.cols(), xtrain.row(r).begin());
            ytrain[r] = c.id[train[r]];
        }
        const SoftmaxRegression model(xtrain, ytrain, c.count, options.l2, options.iterations);
        std::size_t correct = 0;
        for (std::size_t i : test) {
            if (model.predict(points.row(i)) == c.id[i]) ++correct;
        }
        accuracy_sum += static_cast<double>(correct) / static_cast<double>(test.size());
    }
    return accuracy_sum / static_cast<double>(options.folds);
}

std::string_view to_string(ClusterMetric metric) noexcept {
    switch (metric) {
        case ClusterMetric::DaviesBouldin: return "davies_bouldin";
        case ClusterMetric::CalinskiHarabasz: return "calinski_harabasz";
        case ClusterMetric::LogRegAccuracy: return "logreg_cv_accuracy";
    }
    return "unknown";
}

stats::Tail better_direction(ClusterMetric metric) noexcept {
    return metric == ClusterMetric::DaviesBouldin ? stats::Tail::Less : stats::Tail::Greater;
}

double cluster_metric(ClusterMetric metric, const MatrixD& points, std::span<const int> labels,
                      const LogRegOptions& logreg) {
    switch (metric) {
        case ClusterMetric::DaviesBouldin: return davies_bouldin(points, labels);
        case ClusterMetric::CalinskiHarabasz: return calinski_harabasz(points, labels);
        case ClusterMetric::LogRegAccuracy: return cv_logreg_accuracy(points, labels, logreg);
    }
    fail(ErrorCode::InvalidArgument, "unknown cluster metric");
}

stats::PermutationResult cluster_permutation_test(ClusterMetric metric, const MatrixD& points,
                                                  std::span<const int> labels, std::size_t n_perm,
                                                  std::uint64_t seed, const LogRegOptions& logreg) {
    stats::PermutationOptions options;
    options.n_perm = n_perm;
    options.seed = seed;
    options.tail = better_direction(metric);
    const std::vector<int> observed(labels.begin(), labels.end());
    return stats::permutation_test(
        observed, [&](const std::vector<int>& l) { return cluster_metric(metric, points, l, logreg); },
        [](const std::vector<int>& l, Rng& rng) {
            std::vector<int> shuffled = l;
            rng.shuffle(std::span(shuffled));
            return shuffled;
        },
        options);
}

}  // namespace emospace
