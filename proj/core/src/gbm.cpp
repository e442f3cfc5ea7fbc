#include "emospace/gbm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "emospace/error.hpp"
#include "emospace/random.hpp"

namespace emospace {

std::size_t RegressionTree::leaf_count() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.feature < 0; }));
}

double RegressionTree::predict(std::span<const double> row) const noexcept {
    std::int32_t i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
        const TreeNode& n = nodes[static_cast<std::size_t>(i)];
        i = row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
}

namespace {

constexpr std::uint64_t kFeatureStream = 0x66656174ULL;  // "feat"
constexpr std::uint64_t kBaggingStream = 0x62616767ULL;  // "bagg"
constexpr double kMinGain = 1e-12;

/// Column with implicit zeros: only non-zero entries are listed.
struct SparseColumn {
    std::vector<std::uint32_t> rows;
    std::vector<double> values;
};

/// Maps raw values onto at most max_bins ordered bins. A value v falls in bin b when
/// upper[b-1] < v <= upper[b]; the last bin is unbounded above.
struct BinMapper {
    std::vector<double> upper;

    std::size_t bins() const noexcept { return upper.size() + 1; }
    std::uint8_t bin(double v) const noexcept {
        return static_cast<std::uint8_t>(std::lower_bound(upper.begin(), upper.end(), v) - upper.begin());
    }
};

double split_point(double a, double b) {
    const double mid = a + (b - a) / 2.0;
    return mid >= b ? a : mid;
}

BinMapper make_bin_mapper(const SparseColumn& column, std::size_t n, std::size_t max_bins) {
    std::map<double, std::size_t> counts;
    for (double v : column.values) ++counts[v];
    const std::size_t zeros = n - column.values.size();
    if (zeros > 0) counts[0.0] += zeros;
    std::vector<std::pair<double, std::size_t>> distinct(counts.begin(), counts.end());
    BinMapper mapper;
    if (distinct.size() <= max_bins) {
        for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
            mapper.upper.push_back(split_point(distinct[i].first, distinct[i + 1].first));
        }
        return mapper;
    }
    // Greedy equal-frequency cuts over distinct values.
    std::size_t remaining = n;
    std::size_t bins_left = max_bins;
    std::size_t acc = 0;
    for (std::size_t i = 0; i + 1 < distinct.size() && bins_left > 1; ++i) {
        acc += distinct[i].second;
        const double target = static_cast<double>(remaining) / static_cast<double>(bins_left);
        if (static_cast<double>(acc) >= target) {
            mapper.upper.push_back(split_point(distinct[i].first, distinct[i + 1].first));
            remaining -= acc;
            acc = 0;
            --bins_left;
        }
    }
    return mapper;
}

struct BinnedData {
    std::size_t n = 0;
    std::size_t m = 0;
    std::vector<BinMapper> mappers;
    std::vector<std::uint8_t> bins;  // column-major: bins[f * n + r]
    std::vector<std::size_t> offset; // histogram offset per feature
    std::vector<std::uint8_t> zero_bin;
    std::size_t total_bins = 0;
    // Row-wise entries whose bin differs from the feature's zero bin.
    std::vector<std::size_t> row_ptr;
    std::vector<std::uint32_t> entry_feature;
    std::vector<std::uint8_t> entry_bin;

    std::uint8_t at(std::size_t f, std::size_t r) const noexcept { return bins[f * n + r]; }
};

BinnedData bin_columns(const std::vector<SparseColumn>& columns, std::size_t n, std::size_t max_bins) {
    BinnedData data;
    data.n = n;
    data.m = columns.size();
    data.mappers.reserve(data.m);
    data.bins.resize(data.m * n);
    data.offset.resize(data.m);
    data.zero_bin.resize(data.m);
    for (std::size_t f = 0; f < data.m; ++f) {
        data.mappers.push_back(make_bin_mapper(columns[f], n, max_bins));
        const BinMapper& mapper = data.mappers.back();
        const std::uint8_t zero_bin = mapper.bin(0.0);
        data.zero_bin[f] = zero_bin;
        std::fill_n(data.bins.begin() + static_cast<std::ptrdiff_t>(f * n), n, zero_bin);
        for (std::size_t k = 0; k < columns[f].rows.size(); ++k) {
            data.bins[f * n + columns[f].rows[k]] = mapper.bin(columns[f].values[k]);
        }
        data.offset[f] = data.total_bins;
        data.total_bins += mapper.bins();
    }
    std::vector<std::size_t> per_row(n, 0);
    for (std::size_t f = 0; f < data.m; ++f) {
        for (std::uint32_t r : columns[f].rows) {
            if (data.at(f, r) != data.zero_bin[f]) ++per_row[r];
        }
    }
    data.row_ptr.assign(n + 1, 0);
    for (std::size_t r = 0; r < n; ++r) data.row_ptr[r + 1] = data.row_ptr[r] + per_row[r];
    data.entry_feature.resize(data.row_ptr[n]);
    data.entry_bin.resize(data.row_ptr[n]);
    std::vector<std::size_t> cursor(data.row_ptr.begin(), data.row_ptr.end() - 1);
    for (std::size_t f = 0; f < data.m; ++f) {  // feature-major fill keeps each row sorted by feature
        for (std::uint32_t r : columns[f].rows) {
            const std::uint8_t b = data.at(f, r);
            if (b == data.zero_bin[f]) continue;
            data.entry_feature[cursor[r]] = static_cast<std::uint32_t>(f);
            data.entry_bin[cursor[r]] = b;
            ++cursor[r];
        }
    }
    return data;
}

struct Split {
    double gain = 0.0;
    std::size_t feature = 0;
    std::size_t bin = 0;
    bool valid = false;
};

/// Non-zero bins of one leaf's histogram, sorted by global bin index. Each feature's
/// zero bin is implicit: it holds the leaf totals minus the listed bins of that feature.
struct SparseHistogram {
    std::vector<std::uint32_t> bin;
    std::vector<double> grad;
    std::vector<std::uint32_t> count;

    void clear() {
        bin.clear();
        grad.clear();
        count.clear();
    }
};

struct Leaf {
    std::vector<std::uint32_t> rows;
    double grad_sum = 0.0;
    std::int32_t node = 0;
    SparseHistogram hist;
    Split best;
};

class SplitFinder {
public:
    explicit SplitFinder(const BinnedData& data)
        : data_(data),
          grad_(data.total_bins, 0.0),
          count_(data.total_bins, 0),
          feature_of_(data.total_bins),
          buf_a_(data.total_bins),
          buf_b_(data.total_bins) {
        for (std::size_t f = 0; f < data.m; ++f) {
            std::fill_n(feature_of_.begin() + static_cast<std::ptrdiff_t>(data.offset[f]), data.mappers[f].bins(),
                        static_cast<std::uint32_t>(f));
        }
    }

    /// Accumulates the leaf's rows into a sparse histogram.
    void build(std::span<const std::uint32_t> rows, std::span<const double> grad, const std::vector<char>& active,
               SparseHistogram& out) {
        std::size_t n_touched = 0;
        std::uint32_t* touched = buf_a_.data();
        double* hg = grad_.data();
        std::uint32_t* hc = count_.data();
        const std::uint32_t* ef = data_.entry_feature.data();
        const std::uint8_t* eb = data_.entry_bin.data();
        const std::size_t* offset = data_.offset.data();
        for (std::uint32_t r : rows) {
            const double g = grad[r];
            for (std::size_t e = data_.row_ptr[r]; e < data_.row_ptr[r + 1]; ++e) {
                const std::uint32_t f = ef[e];
                if (!active[f]) continue;
                const auto idx = static_cast<std::uint32_t>(offset[f] + eb[e]);
                if (hc[idx] == 0) touched[n_touched++] = idx;
                hg[idx] += g;
                ++hc[idx];
            }
        }
        const std::span<const std::uint32_t> sorted = radix_sort(n_touched);
        out.bin.assign(sorted.begin(), sorted.end());
        out.grad.resize(n_touched);
        out.count.resize(n_touched);
        for (std::size_t t = 0; t < n_touched; ++t) {
            const std::uint32_t idx = sorted[t];
            out.grad[t] = hg[idx];
            out.count[t] = hc[idx];
            hg[idx] = 0.0;
            hc[idx] = 0;
        }
    }

    /// parent - small, dropping bins that become empty.
    static void subtract(const SparseHistogram& parent, const SparseHistogram& small, SparseHistogram& out) {
        const std::size_t n = parent.bin.size();
        out.bin.resize(n);
        out.grad.resize(n);
        out.count.resize(n);
        std::size_t j = 0;
        std::size_t k = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double g = parent.grad[i];
            std::uint32_t c = parent.count[i];
            if (j < small.bin.size() && small.bin[j] == parent.bin[i]) {
                g -= small.grad[j];
                c -= small.count[j];
                ++j;
            }
            out.bin[k] = parent.bin[i];
            out.grad[k] = g;
            out.count[k] = c;
            k += c != 0 ? 1 : 0;
        }
        out.bin.resize(k);
        out.grad.resize(k);
        out.count.resize(k);
    }

    Split find(const SparseHistogram& h, double grad_sum, std::size_t count, std::size_t min_leaf) const {
        Split best;
        if (count < 2 * min_leaf) return best;
        const double parent = grad_sum * grad_sum / static_cast<double>(count);
        std::size_t t = 0;
        while (t < h.bin.size()) {
            const std::uint32_t f = feature_of_[h.bin[t]];
            std::size_t end = t;
            double g_nonzero = 0.0;
            std::size_t c_nonzero = 0;
            while (end < h.bin.size() && feature_of_[h.bin[end]] == f) {
                g_nonzero += h.grad[end];
                c_nonzero += h.count[end];
                ++end;
            }
            scan_feature(h, f, t, end, grad_sum - g_nonzero, count - c_nonzero, grad_sum, count, parent, min_leaf,
                         best);
            t = end;
        }
        return best;
    }

private:
    /// LSD radix sort on bytes of the first n entries of buf_a_; returns the sorted span.
    std::span<const std::uint32_t> radix_sort(std::size_t n) {
        std::uint32_t* in = buf_a_.data();
        std::uint32_t* out = buf_b_.data();
        for (unsigned shift = 0; shift < 32 && (std::uint64_t{1} << shift) < data_.total_bins; shift += 8) {
            std::array<std::uint32_t, 257> start{};
            for (std::size_t i = 0; i < n; ++i) ++start[((in[i] >> shift) & 0xFFu) + 1];
            for (std::size_t b = 1; b < start.size(); ++b) start[b] += start[b - 1];
            for (std::size_t i = 0; i < n; ++i) out[start[(in[i] >> shift) & 0xFFu]++] = in[i];
            std::swap(in, out);
        }
        return {in, n};
    }

    /// Walks the feature's non-empty bins in order (zero bin merged in) and keeps the
    /// best boundary; ties keep the earlier feature and bin.
    void scan_feature(const SparseHistogram& h, std::uint32_t f, std::size_t begin, std::size_t end,
                      double zero_grad, std::size_t zero_count, double grad_sum, std::size_t count, double parent,
                      std::size_t min_leaf, Split& best) const {
        const std::size_t off = data_.offset[f];
        const std::size_t nb = data_.mappers[f].bins();
        const std::size_t zero_bin = data_.zero_bin[f];
        double gl = 0.0;
        std::size_t nl = 0;
        bool zero_done = zero_count == 0;
        std::size_t t = begin;
        while (t < end || !zero_done) {
            std::size_t bin;
            double g;
            std::size_t c;
            if (!zero_done && (t == end || h.bin[t] - off > zero_bin)) {
                bin = zero_bin;
                g = zero_grad;
                c = zero_count;
                zero_done = true;
            } else {
                bin = h.bin[t] - off;
                g = h.grad[t];
                c = h.count[t];
                ++t;
            }
            if (bin + 1 >= nb) break;
            gl += g;
            nl += c;
            if (nl < min_leaf) continue;
            const std::size_t nr = count - nl;
            if (nr < min_leaf) break;
            const double gr = grad_sum - gl;
            const double gain = gl * gl / static_cast<double>(nl) + gr * gr / static_cast<double>(nr) - parent;
            if (gain > kMinGain && gain > best.gain) best = {gain, f, bin, true};
        }
    }

    const BinnedData& data_;
    std::vector<double> grad_;
    std::vector<std::uint32_t> count_;
    std::vector<std::uint32_t> feature_of_;
    std::vector<std::uint32_t> buf_a_;
    std::vector<std::uint32_t> buf_b_;
};

void validate_inputs(std::size_t n, std::size_t m, std::span<const double> targets, const GbmParams& params) {
    if (targets.size() != n) fail(ErrorCode::Shape, "GBM targets do not match row count");
    if (n < 2) fail(ErrorCode::InsufficientData, "GBM needs at least 2 rows");
    if (m == 0) fail(ErrorCode::InvalidArgument, "GBM needs at least one feature");
    for (double y : targets) {
        if (!std::isfinite(y)) fail(ErrorCode::Range, "GBM targets must be finite");
    }
    if (!(params.learning_rate > 0.0)) fail(ErrorCode::InvalidArgument, "learning rate must be > 0");
    if (params.num_leaves < 2) fail(ErrorCode::InvalidArgument, "num_leaves must be >= 2");
    if (params.max_bins < 2 || params.max_bins > 256) fail(ErrorCode::InvalidArgument, "max_bins must be in [2, 256]");
    if (params.min_data_in_leaf < 1) fail(ErrorCode::InvalidArgument, "min_data_in_leaf must be >= 1");
    if (!(params.feature_fraction > 0.0 && params.feature_fraction <= 1.0) ||
        !(params.bagging_fraction > 0.0 && params.bagging_fraction <= 1.0)) {
        fail(ErrorCode::InvalidArgument, "feature/bagging fractions must be in (0, 1]");
    }
}

double mse(std::span<const double> pred, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (pred[i] - y[i]) * (pred[i] - y[i]);
    return s / static_cast<double>(y.size());
}

/// Internal node plus the bin index it splits at, for traversal over binned rows.
struct BinnedNode {
    std::size_t feature = 0;
    std::size_t bin = 0;
};

GbmModel train_binned(const BinnedData& data, std::span<const double> y, const GbmParams& params) {
    GbmModel model;
    model.params = params;
    model.feature_count = data.m;
    const std::size_t n = data.n;
    model.base_prediction = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    std::vector<double> pred(n, model.base_prediction);
    model.train_mse.push_back(mse(pred, y));
    if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; })) {
        model.base_prediction = y[0];
        model.constant_target = true;
        model.train_mse.back() = 0.0;
        return model;
    }

    std::vector<double> grad(n);
    std::vector<std::size_t> all_features(data.m);
    std::iota(all_features.begin(), all_features.end(), 0);
    std::vector<std::uint32_t> all_rows(n);
    std::iota(all_rows.begin(), all_rows.end(), 0u);
    SplitFinder finder(data);
    std::vector<char> in_bag(n, 1);
    std::vector<char> active(data.m, 1);

    for (std::size_t round = 0; round < params.rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) grad[i] = pred[i] - y[i];

        if (params.feature_fraction < 1.0) {
            std::vector<std::size_t> features = all_features;
            Rng rng(derive_seed(params.seed, kFeatureStream, round));
            rng.shuffle(std::span(features));
            const auto keep = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::ceil(params.feature_fraction * static_cast<double>(data.m))));
            features.resize(std::min(keep, data.m));
            std::fill(active.begin(), active.end(), 0);
            for (std::size_t f : features) active[f] = 1;
        }
        std::vector<std::uint32_t> rows = all_rows;
        if (params.bagging_fraction < 1.0) {
            Rng rng(derive_seed(params.seed, kBaggingStream, round));
            rng.shuffle(std::span(rows));
            const auto keep = std::max<std::size_t>(
                2, static_cast<std::size_t>(std::ceil(params.bagging_fraction * static_cast<double>(n))));
            rows.resize(std::min(keep, n));
            std::sort(rows.begin(), rows.end());
            std::fill(in_bag.begin(), in_bag.end(), 0);
            for (std::uint32_t r : rows) in_bag[r] = 1;
        }

        RegressionTree tree;
        std::vector<BinnedNode> binned_nodes;
        tree.nodes.push_back({});
        binned_nodes.push_back({});
        std::vector<Leaf> leaves;
        {
            Leaf root;
            root.rows = std::move(rows);
            for (std::uint32_t r : root.rows) root.grad_sum += grad[r];
            finder.build(root.rows, grad, active, root.hist);
            root.best = finder.find(root.hist, root.grad_sum, root.rows.size(), params.min_data_in_leaf);
            leaves.push_back(std::move(root));
        }

        while (leaves.size() < params.num_leaves) {
            std::size_t pick = leaves.size();
            double best_gain = 0.0;
            for (std::size_t l = 0; l < leaves.size(); ++l) {
                if (leaves[l].best.valid && leaves[l].best.gain > best_gain) {
                    best_gain = leaves[l].best.gain;
                    pick = l;
                }
            }
            if (pick == leaves.size()) break;

            Leaf parent = std::move(leaves[pick]);
            const Split s = parent.best;
            Leaf left;
            Leaf right;
            const std::uint8_t* col = data.bins.data() + s.feature * n;
            for (std::uint32_t r : parent.rows) {
                Leaf& side = col[r] <= s.bin ? left : right;
                side.rows.push_back(r);
                side.grad_sum += grad[r];
            }

            const auto left_id = static_cast<std::int32_t>(tree.nodes.size());
            const auto right_id = left_id + 1;
            tree.nodes.resize(tree.nodes.size() + 2);
            binned_nodes.resize(binned_nodes.size() + 2);
            TreeNode& node = tree.nodes[static_cast<std::size_t>(parent.node)];
            node.feature = static_cast<std::int32_t>(s.feature);
            node.threshold = data.mappers[s.feature].upper[s.bin];
            node.left = left_id;
            node.right = right_id;
            binned_nodes[static_cast<std::size_t>(parent.node)] = {s.feature, s.bin};
            left.node = left_id;
            right.node = right_id;
            Leaf& small = left.rows.size() <= right.rows.size() ? left : right;
            Leaf& large = left.rows.size() <= right.rows.size() ? right : left;
            finder.build(small.rows, grad, active, small.hist);
            SplitFinder::subtract(parent.hist, small.hist, large.hist);
            for (Leaf* child : {&left, &right}) {
                child->best = finder.find(child->hist, child->grad_sum, child->rows.size(), params.min_data_in_leaf);
                if (!child->best.valid) child->hist = {};
            }
            leaves[pick] = std::move(left);
            leaves.push_back(std::move(right));
        }

        for (const Leaf& leaf : leaves) {
            TreeNode& node = tree.nodes[static_cast<std::size_t>(leaf.node)];
            node.value = leaf.rows.empty() ? 0.0 : -leaf.grad_sum / static_cast<double>(leaf.rows.size());
            for (std::uint32_t r : leaf.rows) pred[r] += params.learning_rate * node.value;
        }
        // Rows left out of the bag are routed through the binned tree.
        if (params.bagging_fraction < 1.0) {
            for (std::size_t r = 0; r < n; ++r) {
                if (in_bag[r]) continue;
                std::int32_t i = 0;
                while (tree.nodes[static_cast<std::size_t>(i)].feature >= 0) {
                    const BinnedNode& bn = binned_nodes[static_cast<std::size_t>(i)];
                    const TreeNode& tn = tree.nodes[static_cast<std::size_t>(i)];
                    i = data.at(bn.feature, r) <= bn.bin ? tn.left : tn.right;
                }
                pred[r] += params.learning_rate * tree.nodes[static_cast<std::size_t>(i)].value;
            }
        }
        model.trees.push_back(std::move(tree));
        model.train_mse.push_back(mse(pred, y));
    }
    return model;
}

}  // namespace

GbmModel train_gbm(const MatrixD& features, std::span<const double> targets, const GbmParams& params) {
    validate_inputs(features.rows(), features.cols(), targets, params);
    std::vector<SparseColumn> columns(features.cols());
    for (std::size_t r = 0; r < features.rows(); ++r) {
        const auto row = features.row(r);
        for (std::size_t f = 0; f < row.size(); ++f) {
            if (!std::isfinite(row[f])) fail(ErrorCode::Range, "GBM features must be finite");
            if (row[f] != 0.0) {
                columns[f].rows.push_back(static_cast<std::uint32_t>(r));
                columns[f].values.push_back(row[f]);
            }
        }
    }
    return train_binned(bin_columns(columns, features.rows(), params.max_bins), targets, params);
}

GbmModel train_gbm(std::span<const SparseFeatureVector* const> rows, std::span<const std::uint32_t> feature_indices,
                   std::span<const double> targets, const GbmParams& params) {
    validate_inputs(rows.size(), feature_indices.size(), targets, params);
    std::map<std::uint32_t, std::size_t> column_of;
    for (std::size_t c = 0; c < feature_indices.size(); ++c) column_of.emplace(feature_indices[c], c);
    std::vector<SparseColumn> columns(feature_indices.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const SparseFeatureVector& code = *rows[r];
        for (std::size_t k = 0; k < code.indices.size(); ++k) {
            const auto it = column_of.find(code.indices[k]);
            if (it == column_of.end()) continue;
            columns[it->second].rows.push_back(static_cast<std::uint32_t>(r));
            columns[it->second].values.push_back(code.values[k]);
        }
    }
    return train_binned(bin_columns(columns, rows.size(), params.max_bins), targets, params);
}

std::vector<double> predict_gbm(const GbmModel& model, const MatrixD& features) {
    if (features.cols() != model.feature_count) {
        fail(ErrorCode::Shape, "GBM expects " + std::to_string(model.feature_count) + " features, got " +
                                   std::to_string(features.cols()));
    }
    std::vector<double> out(features.rows(), model.base_prediction);
    for (std::size_t r = 0; r < features.rows(); ++r) {
        double sum = 0.0;
        for (const auto& tree : model.trees) sum += tree.predict(features.row(r));
        out[r] += model.params.learning_rate * sum;
    }
    return out;
}

std::vector<double> predict_gbm(const GbmModel& model, std::span<const SparseFeatureVector* const> rows,
                                std::span<const std::uint32_t> feature_indices) {
    if (feature_indices.size() != model.feature_count) {
        fail(ErrorCode::Shape, "GBM expects " + std::to_string(model.feature_count) + " features, got " +
                                   std::to_string(feature_indices.size()));
    }
    std::vector<double> out(rows.size(), model.base_prediction);
    std::vector<double> dense(feature_indices.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::fill(dense.begin(), dense.end(), 0.0);
        const SparseFeatureVector& code = *rows[r];
        std::size_t a = 0;
        for (std::size_t b = 0; b < feature_indices.size() && a < code.indices.size(); ++b) {
            while (a < code.indices.size() && code.indices[a] < feature_indices[b]) ++a;
            if (a < code.indices.size() && code.indices[a] == feature_indices[b]) dense[b] = code.values[a];
        }
        double sum = 0.0;
        for (const auto& tree : model.trees) sum += tree.predict(dense);
        out[r] += model.params.learning_rate * sum;
    }
    return out;
}

}  // namespace emospace
