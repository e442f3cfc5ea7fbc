#include "emospace/latent.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "emospace/error.hpp"
#include "emospace/random.hpp"

namespace emospace {

namespace {

constexpr std::uint64_t kInitStream = 0x696e6974ULL;   // "init"
constexpr std::uint64_t kBatchStream = 0x62617463ULL;  // "batc"

struct Normalized {
    std::array<double, kEmbeddingDims> u{};
    double norm = 0.0;
};

Normalized project(const MatrixD& projection, std::span<const double> x) {
    Normalized out;
    double sq = 0.0;
    for (std::size_t d = 0; d < kEmbeddingDims; ++d) {
        const auto row = projection.row(d);
        double s = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) s += row[j] * x[j];
        out.u[d] = s;
        sq += s * s;
    }
    out.norm = std::sqrt(sq);
    if (out.norm > 0.0) {
        for (double& v : out.u) v /= out.norm;
    }
    return out;
}

}  // namespace

MatrixD initial_projection(std::size_t input_dim, std::uint64_t seed) {
    MatrixD p(kEmbeddingDims, input_dim);
    Rng rng(derive_seed(seed, kInitStream));
    const double scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
    for (double& v : p.data()) v = scale * rng.normal();
    return p;
}

double infonce_loss(const MatrixD& projection, const MatrixD& inputs, const InfoNceBatch& batch, double temperature,
                    MatrixD* gradient) {
    const std::size_t b = batch.anchors.size();
    if (b == 0 || batch.positives.size() != b) fail(ErrorCode::InvalidArgument, "InfoNCE batch is empty or ragged");
    if (projection.rows() != kEmbeddingDims || projection.cols() != inputs.cols()) {
        fail(ErrorCode::Shape, "projection does not match input width");
    }
    std::vector<Normalized> anchors(b);
    std::vector<Normalized> positives(b);
    for (std::size_t i = 0; i < b; ++i) {
        anchors[i] = project(projection, inputs.row(batch.anchors[i]));
        positives[i] = project(projection, inputs.row(batch.positives[i]));
        if (anchors[i].norm == 0.0 || positives[i].norm == 0.0) {
            fail(ErrorCode::Degenerate, "projected sample has zero norm");
        }
    }

    const double inv_t = 1.0 / temperature;
    const double inv_b = 1.0 / static_cast<double>(b);
    double loss = 0.0;
    std::vector<double> logits(b);
    // dL/du for anchors and positives.
    std::vector<std::array<double, kEmbeddingDims>> grad_u(b), grad_v(b);
    for (auto& g : grad_u) g.fill(0.0);
    for (auto& g : grad_v) g.fill(0.0);

    for (std::size_t i = 0; i < b; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < b; ++j) {
            double c = 0.0;
            for (std::size_t d = 0; d < kEmbeddingDims; ++d) c += anchors[i].u[d] * positives[j].u[d];
            logits[j] = c * inv_t;
            mx = std::max(mx, logits[j]);
        }
        double z = 0.0;
        for (double l : logits) z += std::exp(l - mx);
        loss += (mx + std::log(z) - logits[i]) * inv_b;
        if (gradient == nullptr) continue;
        for (std::size_t j = 0; j < b; ++j) {
            const double g = (std::exp(logits[j] - mx) / z - (i == j ? 1.0 : 0.0)) * inv_t * inv_b;
            for (std::size_t d = 0; d < kEmbeddingDims; ++d) {
                grad_u[i][d] += g * positives[j].u[d];
                grad_v[j][d] += g * anchors[i].u[d];
            }
        }
    }

    if (gradient != nullptr) {
        *gradient = MatrixD(kEmbeddingDims, inputs.cols(), 0.0);
        // Through u = y / |y|: dL/dy = (g - u (u . g)) / |y|, then dL/dP += dL/dy x^T.
        auto backprop = [&](const Normalized& n, const std::array<double, kEmbeddingDims>& g, std::span<const double> x) {
            double ug = 0.0;
            for (std::size_t d = 0; d < kEmbeddingDims; ++d) ug += n.u[d] * g[d];
            for (std::size_t d = 0; d < kEmbeddingDims; ++d) {
                const double dy = (g[d] - n.u[d] * ug) / n.norm;
                if (dy == 0.0) continue;
                auto row = gradient->row(d);
                for (std::size_t j = 0; j < x.size(); ++j) row[j] += dy * x[j];
            }
        };
        for (std::size_t i = 0; i < b; ++i) {
            backprop(anchors[i], grad_u[i], inputs.row(batch.anchors[i]));
            backprop(positives[i], grad_v[i], inputs.row(batch.positives[i]));
        }
    }
    return loss;
}

EmbeddingModel train_embedding(const MatrixD& inputs, std::span<const int> labels, const EmbeddingConfig& config) {
    const std::size_t n = inputs.rows();
    if (labels.size() != n) fail(ErrorCode::Shape, "embedding labels do not match input rows");
    if (inputs.cols() < kEmbeddingDims) fail(ErrorCode::Shape, "embedding input needs at least 3 columns");
    if (!(config.temperature > 0.0)) fail(ErrorCode::InvalidArgument, "temperature must be > 0");
    if (config.batch_size == 0) fail(ErrorCode::InvalidArgument, "batch size must be >= 1");

    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < n; ++i) members[labels[i]].push_back(i);
    for (const auto& [label, idx] : members) {
        if (idx.size() < 2) {
            fail(ErrorCode::InsufficientData, "label " + std::to_string(label) + " has a single member; no positive pair");
        }
    }

    EmbeddingModel model;
    model.config = config;
    model.temperature = config.temperature;
    model.projection = initial_projection(inputs.cols(), config.seed);

    Rng rng(derive_seed(config.seed, kBatchStream));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batch = std::min(config.batch_size, n);
    const std::size_t interval = std::max<std::size_t>(1, config.trace_interval);
    MatrixD grad;
    double running = 0.0;
    std::size_t running_count = 0;
    InfoNceBatch b;
    for (std::size_t step = 0; step < config.steps; ++step) {
        // Partial Fisher-Yates: the first `batch` entries become a uniform sample without replacement.
        for (std::size_t i = 0; i < batch; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
            std::swap(order[i], order[j]);
        }
        b.anchors.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(batch));
        b.positives.resize(batch);
        for (std::size_t i = 0; i < batch; ++i) {
            const auto& same = members[labels[b.anchors[i]]];
            std::size_t pick = b.anchors[i];
            while (pick == b.anchors[i]) pick = same[rng.below(same.size())];
            b.positives[i] = pick;
        }
        running += infonce_loss(model.projection, inputs, b, config.temperature, &grad);
        ++running_count;
        for (std::size_t q = 0; q < grad.size(); ++q) model.projection.data()[q] -= config.learning_rate * grad.data()[q];
        if (running_count == interval || step + 1 == config.steps) {
            model.loss_trace.push_back(running / static_cast<double>(running_count));
            running = 0.0;
            running_count = 0;
        }
    }
    for (double v : model.projection.data()) {
        if (!std::isfinite(v)) fail(ErrorCode::Numerical, "embedding training diverged");
    }
    return model;
}

Embedding embed(const EmbeddingModel& model, const MatrixD& inputs) {
    if (inputs.cols() != model.input_dim()) fail(ErrorCode::Shape, "embedding input width does not match the model");
    Embedding out;
    out.points = MatrixD(inputs.rows(), kEmbeddingDims, 0.0);
    for (std::size_t i = 0; i < inputs.rows(); ++i) {
        const Normalized n = project(model.projection, inputs.row(i));
        if (n.norm == 0.0) {
            out.zero_rows.push_back(i);
            continue;
        }
        std::copy(n.u.begin(), n.u.end(), out.points.row(i).begin());
    }
    return out;
}

AxisCorrelationReport axis_affect_correlation(const MatrixD& points, const AffectiveLexicon& lexicon,
                                              std::span<const std::string> words) {
    if (points.rows() != words.size()) fail(ErrorCode::Shape, "embedding rows do not match word list");
    std::vector<std::size_t> rows;
    std::vector<double> valence;
    std::vector<double> arousal;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (const LexiconEntry* e = lexicon.find(words[i])) {
            rows.push_back(i);
            valence.push_back(e->valence_raw);
            arousal.push_back(e->arousal_raw);
        }
    }
    if (rows.size() < 3) fail(ErrorCode::InsufficientData, "fewer than 3 embedded words have affective ratings");
    AxisCorrelationReport report;
    report.matched_words = rows.size();
    for (std::size_t d = 0; d < points.cols(); ++d) {
        std::vector<double> axis;
        axis.reserve(rows.size());
        for (std::size_t r : rows) axis.push_back(points(r, d));
        for (AffectTarget target : {AffectTarget::Valence, AffectTarget::Arousal}) {
            const auto& ratings = target == AffectTarget::Valence ? valence : arousal;
            const stats::Correlation c = stats::pearson(axis, ratings);
            report.entries.push_back({d, target, c.r, c.p, 0.0});
        }
    }
    const std::size_t m = report.entries.size();
    for (auto& e : report.entries) e.p_bonferroni = stats::bonferroni(e.p, m);
    return report;
}

}  // namespace emospace
