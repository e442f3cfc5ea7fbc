#include "emospace/steer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "emospace/error.hpp"
#include "emospace/random.hpp"

namespace emospace {

EmotionActivationMatrix build_activation_matrix(const ConceptSet& concept_set, const WordVectors& word_vectors,
                                                std::size_t width) {
    EmotionActivationMatrix out;
    out.emotion = concept_set.emotion.key;
    std::vector<const SparseFeatureVector*> codes;
    for (const auto& scored : concept_set.words) {
        const auto it = word_vectors.find(scored.word);
        if (it == word_vectors.end()) continue;
        if (it->second.width != width) {
            fail(ErrorCode::Shape, "vector for '" + scored.word + "' has width " + std::to_string(it->second.width) +
                                       ", expected " + std::to_string(width));
        }
        out.words.push_back(scored.word);
        codes.push_back(&it->second);
    }
    if (codes.empty()) {
        fail(ErrorCode::InsufficientData, "concept set for " + out.emotion + " has no word with a feature vector");
    }
    out.values = MatrixD(codes.size(), width);
    for (std::size_t r = 0; r < codes.size(); ++r) {
        const SparseFeatureVector& code = *codes[r];
        for (std::size_t k = 0; k < code.indices.size(); ++k) {
            if (code.values[k] < 0.0f) fail(ErrorCode::Range, "activation matrix entries must be non-negative");
            out.values(r, code.indices[k]) = code.values[k];
        }
    }
    return out;
}

double frobenius_error(const MatrixD& s, const MatrixD& w, const MatrixD& h) {
    if (w.rows() != s.rows() || h.cols() != s.cols() || w.cols() != h.rows()) {
        fail(ErrorCode::Shape, "factor shapes do not match the matrix");
    }
    long double sum = 0.0L;
    for (std::size_t i = 0; i < s.rows(); ++i) {
        for (std::size_t j = 0; j < s.cols(); ++j) {
            double wh = 0.0;
            for (std::size_t c = 0; c < w.cols(); ++c) wh += w(i, c) * h(c, j);
            const long double diff = static_cast<long double>(s(i, j)) - wh;
            sum += diff * diff;
        }
    }
    return static_cast<double>(std::sqrt(sum));
}

NmfFactors nmf(const MatrixD& s, const NmfOptions& options) {
    const std::size_t k = s.rows();
    const std::size_t l = s.cols();
    const std::size_t c = options.components;
    if (k == 0 || l == 0) fail(ErrorCode::Shape, "NMF input is empty");
    if (c < 1 || c > std::min(k, l)) {
        fail(ErrorCode::InvalidArgument, "component count " + std::to_string(c) + " outside [1, " +
                                             std::to_string(std::min(k, l)) + "]");
    }
    double total = 0.0;
    for (double v : s.storage()) {
        if (!std::isfinite(v) || v < 0.0) fail(ErrorCode::Range, "NMF input must be finite and non-negative");
        total += v;
    }

    NmfFactors f;
    f.w = MatrixD(k, c);
    f.h = MatrixD(c, l);
    const double scale = std::sqrt(total / static_cast<double>(k * l) / static_cast<double>(c));
    Rng rng(options.seed);
    for (double& v : f.w.data()) v = scale * rng.uniform_open_low();
    for (double& v : f.h.data()) v = scale * rng.uniform_open_low();
    f.error_trace.push_back(frobenius_error(s, f.w, f.h));

    MatrixD wt_s(c, l);
    MatrixD wt_w(c, c);
    MatrixD s_ht(k, c);
    MatrixD h_ht(c, c);
    MatrixD prev_w;
    MatrixD prev_h;
    for (std::size_t it = 0; it < options.iterations; ++it) {
        prev_w = f.w;
        prev_h = f.h;
        // H <- H * (W^T S) / (W^T W H)
        for (std::size_t a = 0; a < c; ++a) {
            for (std::size_t b = 0; b < c; ++b) {
                double v = 0.0;
                for (std::size_t i = 0; i < k; ++i) v += f.w(i, a) * f.w(i, b);
                wt_w(a, b) = v;
            }
            for (std::size_t j = 0; j < l; ++j) {
                double v = 0.0;
                for (std::size_t i = 0; i < k; ++i) v += f.w(i, a) * s(i, j);
                wt_s(a, j) = v;
            }
        }
        for (std::size_t j = 0; j < l; ++j) {
            for (std::size_t a = 0; a < c; ++a) {
                double den = 0.0;
                for (std::size_t b = 0; b < c; ++b) den += wt_w(a, b) * f.h(b, j);
                // den == 0 implies the numerator is zero as well for non-negative factors.
                f.h(a, j) = den > 0.0 ? f.h(a, j) * wt_s(a, j) / den : 0.0;
            }
        }
        // W <- W * (S H^T) / (W H H^T)
        for (std::size_t a = 0; a < c; ++a) {
            for (std::size_t b = 0; b < c; ++b) {
                double v = 0.0;
                for (std::size_t j = 0; j < l; ++j) v += f.h(a, j) * f.h(b, j);
                h_ht(a, b) = v;
            }
        }
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t a = 0; a < c; ++a) {
                double v = 0.0;
                for (std::size_t j = 0; j < l; ++j) v += s(i, j) * f.h(a, j);
                s_ht(i, a) = v;
            }
        }
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t a = 0; a < c; ++a) {
                double den = 0.0;
                for (std::size_t b = 0; b < c; ++b) den += f.w(i, b) * h_ht(b, a);
                f.w(i, a) = den > 0.0 ? f.w(i, a) * s_ht(i, a) / den : 0.0;
            }
        }
        const double err = frobenius_error(s, f.w, f.h);
        if (err > f.error_trace.back()) {
            // Exact updates never increase the error; this is rounding at a fixed point.
            f.w = std::move(prev_w);
            f.h = std::move(prev_h);
            f.converged = true;
            break;
        }
        f.error_trace.push_back(err);
        ++f.iterations;
    }
    return f;
}

SalientFeatures select_salient_features(const NmfFactors& factors, std::size_t top_components,
                                        std::size_t features) {
    const std::size_t c = factors.h.rows();
    const std::size_t l = factors.h.cols();
    if (factors.w.cols() != c) fail(ErrorCode::Shape, "W and H disagree on the component count");
    if (top_components < 1 || top_components > c) {
        fail(ErrorCode::InvalidArgument, "M must lie in [1, " + std::to_string(c) + "]");
    }
    if (features < 1) fail(ErrorCode::InvalidArgument, "F must be at least 1");

    std::vector<double> energy(c, 0.0);
    for (std::size_t a = 0; a < c; ++a) {
        double wsum = 0.0;
        for (std::size_t i = 0; i < factors.w.rows(); ++i) wsum += factors.w(i, a);
        double hsum = 0.0;
        for (std::size_t j = 0; j < l; ++j) hsum += factors.h(a, j);
        energy[a] = wsum * hsum;
    }
    SalientFeatures out;
    out.component_ranking.resize(c);
    std::iota(out.component_ranking.begin(), out.component_ranking.end(), 0);
    std::stable_sort(out.component_ranking.begin(), out.component_ranking.end(),
                     [&](std::size_t a, std::size_t b) { return energy[a] > energy[b]; });

    std::vector<std::pair<double, std::uint32_t>> pooled;
    for (std::size_t j = 0; j < l; ++j) {
        double best = 0.0;
        for (std::size_t r = 0; r < top_components; ++r) best = std::max(best, factors.h(out.component_ranking[r], j));
        if (best > 0.0) pooled.emplace_back(best, static_cast<std::uint32_t>(j));
    }
    if (pooled.size() < features) {
        fail(ErrorCode::InsufficientData, "only " + std::to_string(pooled.size()) +
                                              " non-zero features in the top components, F = " +
                                              std::to_string(features));
    }
    std::sort(pooled.begin(), pooled.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (std::size_t q = 0; q < features; ++q) {
        out.features.push_back(pooled[q].second);
        out.scores.push_back(pooled[q].first);
    }
    return out;
}

namespace {

std::vector<double> column_sum(const SaeModel& sae, std::span<const std::uint32_t> indices) {
    std::vector<double> sum(sae.hidden_dim(), 0.0);
    for (std::uint32_t idx : indices) {
        for (std::size_t r = 0; r < sae.hidden_dim(); ++r) sum[r] += sae.decoder(r, idx);
    }
    return sum;
}

std::vector<std::uint32_t> checked_indices(std::span<const std::uint32_t> indices, std::size_t width) {
    if (indices.empty()) fail(ErrorCode::InvalidArgument, "steering vector needs at least one feature");
    std::vector<std::uint32_t> sorted(indices.begin(), indices.end());
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        fail(ErrorCode::Duplicate, "steering feature indices must be unique");
    }
    if (sorted.back() >= width) {
        fail(ErrorCode::Range, "feature index " + std::to_string(sorted.back()) + " outside dictionary of width " +
                                   std::to_string(width));
    }
    return sorted;
}

}  // namespace

SteeringVector compile_steering_vector(const SaeModel& sae, std::span<const std::uint32_t> indices) {
    SteeringVector sv;
    sv.feature_indices = checked_indices(indices, sae.width());
    const std::vector<double> sum = column_sum(sae, sv.feature_indices);
    sv.dense_sum.assign(sum.begin(), sum.end());
    sv.provenance.features = sv.feature_indices.size();
    return sv;
}

MatrixF apply_steering(const MatrixF& hidden_states, std::span<const float> dense_sum, double coeff) {
    if (dense_sum.size() != hidden_states.cols()) {
        fail(ErrorCode::Shape, "steering vector has dimension " + std::to_string(dense_sum.size()) +
                                   ", hidden states have " + std::to_string(hidden_states.cols()));
    }
    if (!std::isfinite(coeff)) fail(ErrorCode::InvalidArgument, "steering coefficient must be finite");
    MatrixF out = hidden_states;
    if (coeff == 0.0) return out;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) {
            row[j] = static_cast<float>(static_cast<double>(row[j]) + coeff * static_cast<double>(dense_sum[j]));
        }
    }
    return out;
}

MatrixF apply_steering(const MatrixF& hidden_states, const SteeringVector& vector, double coeff) {
    return apply_steering(hidden_states, vector.dense_sum, coeff);
}

SteeringBundle to_bundle(const SteeringVector& vector, const SaeModel& sae) {
    SteeringBundle b;
    b.emotion = vector.emotion;
    b.language = vector.language;
    b.sae_id = sae.model_id;
    b.layer = sae.layer_index;
    b.hidden_dim = sae.hidden_dim();
    b.width = sae.width();
    b.feature_indices = vector.feature_indices;
    b.dense_sum = vector.dense_sum;
    b.provenance = vector.provenance;
    return b;
}

SteeringVector from_bundle(const SteeringBundle& bundle) {
    SteeringVector sv;
    sv.emotion = bundle.emotion;
    sv.language = bundle.language;
    sv.feature_indices = bundle.feature_indices;
    sv.dense_sum = bundle.dense_sum;
    sv.provenance = bundle.provenance;
    return sv;
}

void verify_bundle(const SteeringBundle& bundle, const SaeModel& sae, double tolerance) {
    if (bundle.sae_id != sae.model_id) {
        fail(ErrorCode::Format, "bundle was compiled for SAE '" + bundle.sae_id + "', not '" + sae.model_id + "'");
    }
    if (bundle.hidden_dim != sae.hidden_dim() || bundle.width != sae.width() ||
        bundle.dense_sum.size() != sae.hidden_dim()) {
        fail(ErrorCode::Shape, "bundle dimensions do not match the SAE");
    }
    const auto indices = checked_indices(bundle.feature_indices, sae.width());
    if (indices != bundle.feature_indices) fail(ErrorCode::Format, "bundle feature indices must be ascending");
    const std::vector<double> sum = column_sum(sae, indices);
    double diff = 0.0;
    double norm = 0.0;
    for (std::size_t r = 0; r < sum.size(); ++r) {
        const double e = static_cast<double>(bundle.dense_sum[r]) - sum[r];
        diff += e * e;
        norm += sum[r] * sum[r];
    }
    diff = std::sqrt(diff);
    norm = std::sqrt(norm);
    if (diff > tolerance * std::max(norm, 1e-30)) {
        fail(ErrorCode::Checksum, "bundle dense_sum differs from the decoder column sum (relative error " +
                                      std::to_string(diff / std::max(norm, 1e-30)) + ")");
    }
}

SteeringVector compile_emotion_steering(const SaeModel& sae, const ConceptSet& concept_set,
                                        const WordVectors& word_vectors, const SteeringCompileOptions& options) {
    const EmotionActivationMatrix s = build_activation_matrix(concept_set, word_vectors, sae.width());
    const std::size_t k = s.values.rows();
    const std::size_t c = options.components == 0 ? std::min<std::size_t>(k, 10) : options.components;
    const std::size_t m = options.top_components == 0 ? c : options.top_components;

    const NmfFactors factors = nmf(s.values, {c, options.nmf_iterations, options.seed});
    const SalientFeatures salient = select_salient_features(factors, m, options.features);

    SteeringVector sv = compile_steering_vector(sae, salient.features);
    sv.emotion = concept_set.emotion.key;
    sv.language = concept_set.lang;
    SteeringProvenance& p = sv.provenance;
    p.ranking_rule = std::string(kRankingRule);
    p.components = c;
    p.top_components = m;
    p.features = options.features;
    p.nmf_iterations = factors.iterations;
    p.nmf_seed = options.seed;
    p.nmf_error = factors.error();
    p.source_space = std::string(to_string(concept_set.lang));
    p.component_ranking = salient.component_ranking;
    p.ranked_features = salient.features;
    p.feature_scores = salient.scores;
    p.concept_words = s.words;
    return sv;
}

}  // namespace emospace
