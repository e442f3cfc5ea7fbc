#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "emospace/error.hpp"
#include "emospace/random.hpp"
#include "emospace/sae.hpp"
#include "emospace/sparse.hpp"

namespace emospace::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        Rng rng(derive_seed(reinterpret_cast<std::uintptr_t>(this), ++counter));
        path_ = std::filesystem::temp_directory_path() /
                ("emospace-" + tag + "-" + std::to_string(rng.next() % 1000000007ULL));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline SaeModel random_sae(Rng& rng, std::size_t d, std::size_t L, float theta = 0.1f) {
    SaeModel sae;
    sae.model_id = "random";
    sae.encoder = MatrixF(L, d);
    sae.decoder = MatrixF(d, L);
    sae.encoder_bias.resize(L);
    sae.threshold.assign(L, theta);
    for (float& v : sae.encoder.data()) v = static_cast<float>(rng.normal());
    for (float& v : sae.decoder.data()) v = static_cast<float>(rng.normal());
    for (float& v : sae.encoder_bias) v = static_cast<float>(0.1 * rng.normal());
    return sae;
}

inline std::vector<float> random_vector(Rng& rng, std::size_t n) {
    std::vector<float> v(n);
    for (float& x : v) x = static_cast<float>(rng.normal());
    return v;
}

/// Random sparse code with roughly `density` of the entries active.
inline SparseFeatureVector random_code(Rng& rng, std::size_t L, double density) {
    SparseFeatureVector z;
    z.width = L;
    for (std::size_t i = 0; i < L; ++i) {
        if (rng.uniform() < density) {
            z.indices.push_back(static_cast<std::uint32_t>(i));
            z.values.push_back(static_cast<float>(0.05 + rng.uniform()));
        }
    }
    return z;
}

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

inline std::vector<std::uint32_t> brute_union(const std::vector<std::vector<std::uint32_t>>& sets) {
    std::set<std::uint32_t> s;
    for (const auto& v : sets) s.insert(v.begin(), v.end());
    return {s.begin(), s.end()};
}

/// Error code thrown by `f`, or nullopt when it returns normally.
template <class F>
std::optional<ErrorCode> code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

}  // namespace emospace::testing
