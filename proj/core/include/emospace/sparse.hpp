#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace emospace {

/// Non-negative sparse activation code over a dictionary of `width` features.
/// Indices are strictly ascending and every stored value is > 0.
struct SparseFeatureVector {
    std::size_t width = 0;
    std::vector<std::uint32_t> indices;
    std::vector<float> values;

    std::size_t nnz() const noexcept { return indices.size(); }
    bool empty() const noexcept { return indices.empty(); }

    /// Throws Error(Range|Format) when the invariants above are violated.
    void validate() const;

    double squared_norm() const noexcept;
    std::vector<float> to_dense() const;

    /// Keeps the strictly positive entries of a dense vector.
    static SparseFeatureVector from_dense(std::span<const float> dense);

    friend bool operator==(const SparseFeatureVector&, const SparseFeatureVector&) = default;
};

/// dot(a,b) / (|a| |b|). Throws Error(Degenerate) if either side is zero and
/// Error(Shape) on width mismatch.
double cosine_similarity(const SparseFeatureVector& a, const SparseFeatureVector& b);

}  // namespace emospace
