#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "emospace/error.hpp"
#include "emospace/parallel.hpp"
#include "emospace/random.hpp"

namespace emospace::stats {

struct Correlation {
    double r = 0.0;
    double p = 1.0;
    std::size_t n = 0;
};

/// Sample Pearson correlation with a two-sided p from Student's t on n-2 df.
Correlation pearson(std::span<const double> x, std::span<const double> y);

/// Pearson r only; no p-value and no constant-input check beyond returning 0.
double pearson_r(std::span<const double> x, std::span<const double> y) noexcept;

enum class Alternative { TwoSided, Less, Greater };

struct RankSumResult {
    double rank_sum = 0.0;  // W: sum of ranks of the first sample in the pooled ranking
    double u = 0.0;         // Mann-Whitney U = W - n1(n1+1)/2
    double p = 1.0;
    bool exact = false;
};

/// Wilcoxon rank-sum test. Exact enumeration of the midrank distribution when both
/// samples have <= 10 members, otherwise a tie-corrected normal approximation with
/// continuity correction. "Less" means the first sample tends to be smaller.
RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b,
                                Alternative alternative = Alternative::TwoSided);

/// Midranks (1-based) of the values.
std::vector<double> midranks(std::span<const double> values);

/// min(1, m p) element-wise.
std::vector<double> bonferroni(std::span<const double> pvalues, std::size_t m);
double bonferroni(double p, std::size_t m);

double normal_cdf(double z) noexcept;
double student_t_sf(double t, double df);

double mean(std::span<const double> x) noexcept;
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double stddev(std::span<const double> x) noexcept;
/// Linear-interpolated quantile (type 7) of the values, q in [0, 1].
double quantile(std::vector<double> values, double q);

// ---------------------------------------------------------------------------
// Permutation engine
// ---------------------------------------------------------------------------

enum class Tail {
    Greater,   // large statistics are extreme
    Less,      // small statistics are extreme
    TwoSided,  // |statistic| is compared
};

struct PermutationOptions {
    std::size_t n_perm = 1000;
    std::uint64_t seed = 0;
    Tail tail = Tail::Greater;
    bool keep_null = true;
};

struct PermutationResult {
    double observed = 0.0;
    std::size_t n_perm = 0;
    double null_mean = 0.0;
    double null_sd = 0.0;
    std::size_t extreme_count = 0;  // b
    double p = 1.0;                 // (b + 1) / (n_perm + 1)
    std::uint64_t seed = 0;
    std::vector<double> null_values;  // by replica index

    /// Quantile of the null distribution (e.g. 0.95 for a significance threshold).
    double null_quantile(double q) const;
};

/// True when `candidate` is at least as extreme as `observed` for the tail.
bool at_least_as_extreme(double candidate, double observed, Tail tail) noexcept;

PermutationResult summarize_permutations(double observed, std::vector<double> null_values,
                                         const PermutationOptions& options);

/// Generic permutation test.
///
/// `statistic(data)` computes the statistic; `regroup(data, rng)` returns a permuted
/// copy. Replica r draws from Rng(derive_seed(seed, kPermutationStream, r)), so results
/// are bit-reproducible and independent of the order replicas are evaluated in.
inline constexpr std::uint64_t kPermutationStream = 0x7065726dULL;

template <class Data, class Statistic, class Regroup>
PermutationResult permutation_test(const Data& data, Statistic&& statistic, Regroup&& regroup,
                                   const PermutationOptions& options) {
    if (options.n_perm < 1) fail(ErrorCode::InvalidArgument, "permutation test requires n_perm >= 1");
    const double observed = statistic(data);
    std::vector<double> null_values(options.n_perm, 0.0);
    parallel_for(options.n_perm, [&](std::size_t r) {
        Rng rng(derive_seed(options.seed, kPermutationStream, r));
        try {
            null_values[r] = statistic(regroup(data, rng));
        } catch (const std::exception& e) {
            fail(ErrorCode::Numerical,
                 "statistic failed on permutation " + std::to_string(r) + ": " + e.what());
        }
    });
    return summarize_permutations(observed, std::move(null_values), options);
}

// ---------------------------------------------------------------------------
// Random-intercept linear mixed model
// ---------------------------------------------------------------------------

struct LmmFit {
    double intercept = 0.0;         // beta0
    double slope = 0.0;             // beta1, fixed effect of the covariate
    double sigma_u2 = 0.0;          // random-intercept variance
    double sigma_e2 = 0.0;          // residual variance
    double variance_ratio = 0.0;    // lambda = sigma_u2 / sigma_e2
    double log_likelihood = 0.0;
    std::size_t groups = 0;
    std::size_t observations = 0;
    bool boundary = false;          // lambda estimated at 0
};

/// Per-group sufficient statistics; lets permutation replicas refit cheaply.
struct LmmData {
    std::vector<double> y;
    std::vector<double> x;
    std::vector<std::uint32_t> group;  // dense ids in [0, groups)
    std::size_t groups = 0;
};

/// Builds LmmData from arbitrary group keys (dense ids assigned in first-seen order).
LmmData make_lmm_data(std::span<const double> y, std::span<const double> x,
                      std::span<const std::string> group_keys);

/// y_ij = b0 + b1 x_ij + u_i + e_ij by maximum likelihood, profiling the variance
/// ratio lambda = sigma_u^2 / sigma_e^2 with GLS for the fixed effects at each lambda.
LmmFit fit_lmm_random_intercept(const LmmData& data);

}  // namespace emospace::stats
