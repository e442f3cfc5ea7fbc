#include "emospace/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "emospace/error.hpp"

namespace emospace {

void SparseFeatureVector::validate() const {
    if (indices.size() != values.size()) {
        fail(ErrorCode::Format, "sparse vector has " + std::to_string(indices.size()) +
                                    " indices but " + std::to_string(values.size()) + " values");
    }
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= width) {
            fail(ErrorCode::Range, "feature index " + std::to_string(indices[i]) +
                                       " outside [0, " + std::to_string(width) + ")");
        }
        if (i > 0 && indices[i] <= indices[i - 1]) {
            fail(ErrorCode::Format, "feature indices must be strictly ascending");
        }
        if (!(values[i] > 0.0f) || !std::isfinite(values[i])) {
            fail(ErrorCode::Range, "feature values must be finite and > 0");
        }
    }
}

double SparseFeatureVector::squared_norm() const noexcept {
    double s = 0.0;
    for (float v : values) s += static_cast<double>(v) * v;
    return s;
}

std::vector<float> SparseFeatureVector::to_dense() const {
    std::vector<float> dense(width, 0.0f);
    for (std::size_t i = 0; i < indices.size(); ++i) dense[indices[i]] = values[i];
    return dense;
}

SparseFeatureVector SparseFeatureVector::from_dense(std::span<const float> dense) {
    SparseFeatureVector out;
    out.width = dense.size();
    for (std::size_t i = 0; i < dense.size(); ++i) {
        if (dense[i] > 0.0f) {
            out.indices.push_back(static_cast<std::uint32_t>(i));
            out.values.push_back(dense[i]);
        }
    }
    return out;
}

double cosine_similarity(const SparseFeatureVector& a, const SparseFeatureVector& b) {
    if (a.width != b.width) fail(ErrorCode::Shape, "cosine similarity of vectors with different widths");
    const double na = a.squared_norm();
    const double nb = b.squared_norm();
    if (na == 0.0 || nb == 0.0) fail(ErrorCode::Degenerate, "cosine similarity of a zero vector");
    double dot = 0.0;
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < a.indices.size() && j < b.indices.size()) {
        if (a.indices[i] < b.indices[j]) {
            ++i;
        } else if (b.indices[j] < a.indices[i]) {
            ++j;
        } else {
            dot += static_cast<double>(a.values[i]) * b.values[j];
            ++i;
            ++j;
        }
    }
    const double sim = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::min(1.0, std::max(-1.0, sim));
}

}  // namespace emospace
